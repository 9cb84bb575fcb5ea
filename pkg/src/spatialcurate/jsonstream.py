"""Single-pass reader for large top-level JSON objects.

Only the arrays named by the caller are streamed element by element; every
other top-level value is decoded whole and dropped. Memory stays bounded by
the largest single element rather than by the file.
"""
from __future__ import annotations

import json
import re
from typing import Iterable, Iterator

_WS = re.compile(r"[ \t\n\r]*")
_decoder = json.JSONDecoder()

CHUNK = 1 << 20
MAX_ELEMENT = 64 << 20


class JSONStreamError(ValueError):
    def __init__(self, msg: str, byte_offset: int):
        super().__init__(f"{msg} at byte offset {byte_offset}")
        self.byte_offset = byte_offset


class _Reader:
    def __init__(self, fh):
        self.fh = fh
        self.buf = ""
        self.pos = 0
        self.base = 0  # bytes consumed before buf[0]
        self.eof = False

    def offset(self, pos: int | None = None) -> int:
        pos = self.pos if pos is None else pos
        return self.base + len(self.buf[:pos].encode("utf-8"))

    def fail(self, msg: str, pos: int | None = None):
        raise JSONStreamError(msg, self.offset(pos))

    def refill(self) -> bool:
        if self.eof:
            return False
        chunk = self.fh.read(CHUNK)
        if self.pos:
            self.base += len(self.buf[: self.pos].encode("utf-8"))
            self.buf = self.buf[self.pos :]
            self.pos = 0
        if not chunk:
            self.eof = True
            return False
        self.buf += chunk
        return True

    def peek(self) -> str:
        while True:
            self.pos = _WS.match(self.buf, self.pos).end()
            if self.pos < len(self.buf):
                return self.buf[self.pos]
            if not self.refill():
                return ""

    def expect(self, chars: str) -> str:
        c = self.peek()
        if not c or c not in chars:
            self.fail(f"expected one of {chars!r}, found {c!r}" if c else "unexpected end of input")
        self.pos += 1
        return c

    def value(self):
        self.peek()
        while True:
            try:
                obj, end = _decoder.raw_decode(self.buf, self.pos)
            except json.JSONDecodeError as err:
                if not self.eof and len(self.buf) - self.pos < MAX_ELEMENT:
                    self.refill()
                    continue
                self.fail(err.msg, err.pos)
            # a number cut at the buffer edge decodes "successfully"
            if end == len(self.buf) and not self.eof:
                self.refill()
                continue
            self.pos = end
            return obj


def iter_top_level(fh, stream_keys: Iterable[str]) -> Iterator[tuple[str, object]]:
    """Yield ``(key, element)`` for each element of the streamed arrays and
    ``(key, value)`` for other top-level members whose key is streamed but not an array."""
    stream_keys = set(stream_keys)
    r = _Reader(fh)
    r.expect("{")
    if r.peek() == "}":
        r.pos += 1
    else:
        while True:
            key = r.value()
            if not isinstance(key, str):
                r.fail("object key must be a string")
            r.expect(":")
            if key in stream_keys and r.peek() == "[":
                r.pos += 1
                if r.peek() == "]":
                    r.pos += 1
                else:
                    while True:
                        yield key, r.value()
                        if r.expect(",]") == "]":
                            break
            else:
                v = r.value()
                if key in stream_keys:
                    yield key, v
            if r.expect(",}") == "}":
                break
    if r.peek():
        r.fail("trailing data after top-level object")
