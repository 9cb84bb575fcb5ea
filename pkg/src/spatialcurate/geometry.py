"""Integer rectangle arithmetic shared by every pair constraint.

Boxes are ``(x, y, w, h)`` with ``y`` growing downward. All area work is done
on Python ints so results are exact; centroids come back as ``Fraction``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    def contains(self, other: "Rect") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "Rect":
        return cls(d["x"], d["y"], d["w"], d["h"])


def round_half_up(v: float) -> int:
    f = math.floor(v)
    return int(f) + (1 if v - f >= 0.5 else 0)


def rect_from_xywh(bbox) -> Rect:
    """Round a COCO float ``[x, y, w, h]`` box to integer pixels, field by field."""
    x, y, w, h = bbox
    return Rect(round_half_up(x), round_half_up(y), round_half_up(w), round_half_up(h))


def clamp(r: Rect, width: int, height: int) -> Rect:
    x0 = min(max(r.x, 0), width)
    y0 = min(max(r.y, 0), height)
    x1 = min(max(r.x1, 0), width)
    y1 = min(max(r.y1, 0), height)
    return Rect(x0, y0, max(x1 - x0, 0), max(y1 - y0, 0))


def area(r: Rect) -> int:
    return r.w * r.h


def intersection_area(a: Rect, b: Rect) -> int:
    w = min(a.x1, b.x1) - max(a.x, b.x)
    h = min(a.y1, b.y1) - max(a.y, b.y)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def union_area(a: Rect, b: Rect) -> int:
    return area(a) + area(b) - intersection_area(a, b)


def bounding_rect(a: Rect, b: Rect) -> Rect:
    x0, y0 = min(a.x, b.x), min(a.y, b.y)
    return Rect(x0, y0, max(a.x1, b.x1) - x0, max(a.y1, b.y1) - y0)


def enclosing_box_area(a: Rect, b: Rect) -> int:
    """Area of the smallest axis-aligned box holding both rects."""
    return area(bounding_rect(a, b))


def centroid(r: Rect) -> tuple[Fraction, Fraction]:
    return Fraction(2 * r.x + r.w, 2), Fraction(2 * r.y + r.h, 2)


def doubled_centroid(r: Rect) -> tuple[int, int]:
    # 2 * centroid; keeps displacement arithmetic in ints
    return 2 * r.x + r.w, 2 * r.y + r.h


def diagonal(r: Rect) -> float:
    return math.hypot(r.w, r.h)


def centroid_distance(a: Rect, b: Rect) -> float:
    ax, ay = doubled_centroid(a)
    bx, by = doubled_centroid(b)
    return math.hypot(ax - bx, ay - by) / 2


@dataclass(frozen=True)
class SquareCrop:
    rect: Rect
    truncated: bool


def _place(lo: int, hi: int, side: int, limit: int) -> int:
    """Left/top coordinate of a ``side``-long span centered on ``[lo, hi]``
    and shifted to stay within ``[0, limit]``."""
    start = (lo + hi - side) // 2
    return min(max(start, 0), limit - side)


def enclosing_square(a: Rect, b: Rect, image, expansion: float = 0.0) -> SquareCrop:
    """Square crop containing ``a`` and ``b``, grown by ``expansion`` about its center.

    The expanded side is capped at the short image side and the square is
    shifted (never cut) to stay inside the image. When the boxes alone need
    more than the short image side, the crop is the largest square that fits,
    centered on the boxes as far as the border allows, and ``truncated`` is set.
    """
    if not 0.0 <= expansion <= 0.10 + 1e-12:
        raise ValueError(f"expansion must lie in [0, 0.10], got {expansion}")
    width, height = image.width, image.height
    u = bounding_rect(a, b)
    side = max(u.w, u.h)
    grown = side + round_half_up(side * expansion)
    limit = min(width, height)
    truncated = side > limit
    grown = min(grown, limit)
    x = _place(u.x, u.x1, grown, width)
    y = _place(u.y, u.y1, grown, height)
    return SquareCrop(Rect(x, y, grown, grown), truncated)
