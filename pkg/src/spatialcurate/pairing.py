"""Candidate pair enumeration and directional relation tokens."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

from .geometry import Rect, doubled_centroid
from .ingest import ImageRecord, ObjectInstance


class RelationToken(str, enum.Enum):
    LEFT = "<left>"
    RIGHT = "<right>"
    ABOVE = "<above>"
    BELOW = "<below>"
    LEFT_ABOVE = "<left+above>"
    RIGHT_ABOVE = "<right+above>"
    LEFT_BELOW = "<left+below>"
    RIGHT_BELOW = "<right+below>"
    AND = "<and>"

    def __str__(self) -> str:
        return self.value

    def opposite(self) -> "RelationToken":
        return _OPPOSITE[self]


DIRECTIONAL = tuple(t for t in RelationToken if t is not RelationToken.AND)

_OPPOSITE = {
    RelationToken.LEFT: RelationToken.RIGHT,
    RelationToken.RIGHT: RelationToken.LEFT,
    RelationToken.ABOVE: RelationToken.BELOW,
    RelationToken.BELOW: RelationToken.ABOVE,
    RelationToken.LEFT_ABOVE: RelationToken.RIGHT_BELOW,
    RelationToken.RIGHT_BELOW: RelationToken.LEFT_ABOVE,
    RelationToken.RIGHT_ABOVE: RelationToken.LEFT_BELOW,
    RelationToken.LEFT_BELOW: RelationToken.RIGHT_ABOVE,
    RelationToken.AND: RelationToken.AND,
}

# (sign dx, sign dy) in image coordinates -> token
_BY_SIGN = {
    (1, 0): RelationToken.RIGHT,
    (-1, 0): RelationToken.LEFT,
    (0, -1): RelationToken.ABOVE,
    (0, 1): RelationToken.BELOW,
    (1, -1): RelationToken.RIGHT_ABOVE,
    (-1, -1): RelationToken.LEFT_ABOVE,
    (1, 1): RelationToken.RIGHT_BELOW,
    (-1, 1): RelationToken.LEFT_BELOW,
}

RELATION_RULES = ("octant", "axis_dominant")


def opposite(t: RelationToken) -> RelationToken:
    return _OPPOSITE[RelationToken(t)]


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


def token_from_displacement(dx: int, dy: int, rule: str = "octant") -> RelationToken | None:
    """Quantize an integer displacement (y down) to a token; ``None`` if zero.

    ``octant``: cardinal sectors are open cones of +/-22.5 degrees, checked
    exactly as ``(minor + major)^2 < 2 * major^2`` (i.e. minor < major*tan 22.5).
    Boundary directions fall to the diagonal token.
    ``axis_dominant``: the larger axis wins, ties go horizontal.
    """
    if dx == 0 and dy == 0:
        return None
    ax, ay = abs(dx), abs(dy)
    if rule == "octant":
        if (ay + ax) ** 2 < 2 * ax * ax:
            return _BY_SIGN[(_sign(dx), 0)]
        if (ax + ay) ** 2 < 2 * ay * ay:
            return _BY_SIGN[(0, _sign(dy))]
        return _BY_SIGN[(_sign(dx), _sign(dy))]
    if rule == "axis_dominant":
        if ax >= ay:
            return _BY_SIGN[(_sign(dx), 0)]
        return _BY_SIGN[(0, _sign(dy))]
    raise ValueError(f"unknown relation rule {rule!r}; expected one of {RELATION_RULES}")


def classify_relation_flagged(
    subject: Rect, obj: Rect, rule: str = "octant"
) -> tuple[RelationToken, bool]:
    """Token for ``subject`` relative to ``obj`` plus a degenerate flag."""
    sx, sy = doubled_centroid(subject)
    ox, oy = doubled_centroid(obj)
    tok = token_from_displacement(sx - ox, sy - oy, rule)
    if tok is None:
        return RelationToken.AND, True
    return tok, False


def classify_relation(subject: Rect, obj: Rect, rule: str = "octant") -> RelationToken:
    return classify_relation_flagged(subject, obj, rule)[0]


@dataclass(frozen=True)
class CandidatePair:
    image_id: int
    pair_index: int
    subject: ObjectInstance
    object: ObjectInstance
    relation: RelationToken
    flags: frozenset = field(default_factory=frozenset)


def pair_count(n: int) -> int:
    return n * (n - 1) // 2


def enumerate_pairs(
    image: ImageRecord, instances: Sequence[ObjectInstance], rule: str = "octant"
) -> list[CandidatePair]:
    """All unordered pairs in canonical order: lower instance id is the subject.

    ``pair_index`` counts pairs row by row, (0,1), (0,2), ..., (1,2), ...
    """
    objs = sorted(instances, key=lambda o: o.instance_id)
    for o in objs:
        if o.image_id != image.image_id:
            raise ValueError(f"instance {o.instance_id} belongs to image {o.image_id}, not {image.image_id}")
    out = []
    k = 0
    for i, a in enumerate(objs):
        for b in objs[i + 1 :]:
            tok, degenerate = classify_relation_flagged(a.bbox, b.bbox, rule)
            flags = frozenset({"degenerate_relation"}) if degenerate else frozenset()
            out.append(CandidatePair(image.image_id, k, a, b, tok, flags))
            k += 1
    return out
