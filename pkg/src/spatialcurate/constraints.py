"""The five pair constraints and the ordered filtering pipeline.

Every comparison is carried out in exact integer arithmetic. Thresholds are
held as ``Fraction`` parsed from their decimal text, so ``0.2`` means 1/5.
Spatial clarity compares squared quantities:

    d / l < tau_u   <=>   (2d)^2 * q^2 < 4 * p^2 * l^2      (tau_u = p/q)

where ``2d`` is the displacement between doubled (integer) centroids and
``l^2`` is the smaller squared box diagonal.
"""
from __future__ import annotations

import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import geometry as geo
from .ingest import DatasetIndex, ImageRecord
from .pairing import CandidatePair, RelationToken, classify_relation_flagged

log = logging.getLogger(__name__)

STAGES = (
    "visual_significance",
    "semantic_distinction",
    "spatial_clarity",
    "minimal_overlap",
    "size_balance",
)
UNION_MODES = ("exact", "enclosing_box")


def as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(str(v))


@dataclass(frozen=True)
class Thresholds:
    tau_v: Fraction = Fraction(1, 5)
    tau_u: Fraction = Fraction(2)
    tau_o: Fraction = Fraction(3, 10)
    tau_s: Fraction = Fraction(1, 2)

    def __post_init__(self):
        for name in ("tau_v", "tau_u", "tau_o", "tau_s"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if not 0 < self.tau_v < 1:
            raise ValueError(f"tau_v must be in (0, 1), got {self.tau_v}")
        if not self.tau_u > 0:
            raise ValueError(f"tau_u must be > 0, got {self.tau_u}")
        if not 0 <= self.tau_o <= 1:
            raise ValueError(f"tau_o must be in [0, 1], got {self.tau_o}")
        if not 0 < self.tau_s <= 1:
            raise ValueError(f"tau_s must be in (0, 1], got {self.tau_s}")

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("tau_v", "tau_u", "tau_o", "tau_s")}


@dataclass
class StageStats:
    candidates_in: int = 0
    dropped_per_stage: dict = field(default_factory=lambda: {s: 0 for s in STAGES})
    survivors: int = 0
    flags: Counter = field(default_factory=Counter)

    def merge(self, other: "StageStats") -> None:
        self.candidates_in += other.candidates_in
        self.survivors += other.survivors
        for s, n in other.dropped_per_stage.items():
            self.dropped_per_stage[s] = self.dropped_per_stage.get(s, 0) + n
        self.flags.update(other.flags)

    def conserved(self) -> bool:
        return self.candidates_in == sum(self.dropped_per_stage.values()) + self.survivors

    def as_dict(self) -> dict:
        return {
            "candidates": self.candidates_in,
            "drops": dict(self.dropped_per_stage),
            "survivors": self.survivors,
            "flags": dict(sorted(self.flags.items())),
        }


@dataclass(frozen=True)
class SpatialDescriptor:
    image_id: int
    pair_index: int
    subject_name: str
    subject_box: geo.Rect
    relation: RelationToken
    object_name: str
    object_box: geo.Rect
    flags: frozenset = frozenset()

    def __str__(self) -> str:
        return f"({self.subject_name}, {tuple(self.subject_box)}) {self.relation} ({self.object_name}, {tuple(self.object_box)})"


# -- scalar predicates -------------------------------------------------------

def _pair_union(a: geo.Rect, b: geo.Rect, union_mode: str) -> int:
    if union_mode == "exact":
        return geo.union_area(a, b)
    if union_mode == "enclosing_box":
        return geo.enclosing_box_area(a, b)
    raise ValueError(f"unknown union_mode {union_mode!r}; expected one of {UNION_MODES}")


def visual_significance(pair: CandidatePair, image: ImageRecord, tau_v, union_mode: str = "exact") -> bool:
    img_area = image.width * image.height
    if img_area <= 0:
        raise ValueError(f"image {image.image_id} has zero area")
    t = as_fraction(tau_v)
    u = _pair_union(pair.subject.bbox, pair.object.bbox, union_mode)
    return u * t.denominator > t.numerator * img_area


def semantic_distinction(pair: CandidatePair) -> bool:
    return pair.subject.category_id != pair.object.category_id


def _clarity(a: geo.Rect, b: geo.Rect, tau_u) -> tuple[bool, bool]:
    t = as_fraction(tau_u)
    ax, ay = geo.doubled_centroid(a)
    bx, by = geo.doubled_centroid(b)
    d2x4 = (ax - bx) ** 2 + (ay - by) ** 2
    l2 = min(a.w * a.w + a.h * a.h, b.w * b.w + b.h * b.h)
    if l2 == 0:
        return False, True
    return d2x4 * t.denominator**2 < 4 * t.numerator**2 * l2, False


def spatial_clarity(pair: CandidatePair, tau_u) -> bool:
    return _clarity(pair.subject.bbox, pair.object.bbox, tau_u)[0]


def minimal_overlap(pair: CandidatePair, tau_o) -> bool:
    a, b = pair.subject.bbox, pair.object.bbox
    m = min(geo.area(a), geo.area(b))
    if m == 0:
        return False
    t = as_fraction(tau_o)
    return geo.intersection_area(a, b) * t.denominator < t.numerator * m


def size_balance(pair: CandidatePair, tau_s) -> bool:
    aa, ab = geo.area(pair.subject.bbox), geo.area(pair.object.bbox)
    hi, lo = max(aa, ab), min(aa, ab)
    if hi == 0:
        return False
    t = as_fraction(tau_s)
    return lo * t.denominator > t.numerator * hi


def first_failure(
    pair: CandidatePair,
    image: ImageRecord,
    th: Thresholds,
    union_mode: str = "exact",
    order: Sequence[str] = STAGES,
) -> str | None:
    """Name of the first stage (in ``order``) the pair fails, or ``None``."""
    checks = {
        "visual_significance": lambda: visual_significance(pair, image, th.tau_v, union_mode),
        "semantic_distinction": lambda: semantic_distinction(pair),
        "spatial_clarity": lambda: spatial_clarity(pair, th.tau_u),
        "minimal_overlap": lambda: minimal_overlap(pair, th.tau_o),
        "size_balance": lambda: size_balance(pair, th.tau_s),
    }
    for stage in order:
        if not checks[stage]():
            return stage
    return None


# -- vectorized pipeline ------------------------------------------------------

_I64_SAFE = 1 << 62


class _Batch:
    """Column arrays for every candidate pair of a run of images."""

    def __init__(self, items: Sequence[tuple]):
        xs, ys, ws, hs, cats, owner = [], [], [], [], [], []
        ii, jj, kk, li, img_area = [], [], [], [], []
        offset = 0
        for pos, (image, objs) in enumerate(items):
            n = len(objs)
            for o in objs:
                x, y, w, h = o.bbox
                xs.append(x); ys.append(y); ws.append(w); hs.append(h)
                cats.append(o.category_id)
            if n >= 2:
                i, j = np.triu_indices(n, 1)
                ii.append(i + offset)
                jj.append(j + offset)
                li.append(np.stack([i, j], axis=1))
                kk.append(np.arange(i.size, dtype=np.int64))
                owner.append(np.full(i.size, pos, dtype=np.int64))
                img_area.append(np.full(i.size, image.width * image.height, dtype=np.int64))
            offset += n
        as64 = lambda v: np.asarray(v, dtype=np.int64)
        self.x, self.y, self.w, self.h, self.cat = map(as64, (xs, ys, ws, hs, cats))
        cat_ = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        self.i, self.j, self.k = cat_(ii), cat_(jj), cat_(kk)
        self.owner, self.img_area = cat_(owner), cat_(img_area)
        # (i, j) positions within each image's own instance tuple
        self.local = np.concatenate(li) if li else np.zeros((0, 2), dtype=np.int64)

    def __len__(self) -> int:
        return int(self.i.size)


def _mul_safe(*arrays) -> bool:
    bound = 1
    for a in arrays:
        if isinstance(a, int):
            m = abs(a)
        else:
            m = int(np.abs(a).max()) if np.size(a) else 0
        bound *= max(m, 1)
    return bound < _I64_SAFE


def _scaled(arr: np.ndarray, factor: int, *others) -> np.ndarray:
    # arr * factor, promoted to Python ints when int64 could overflow
    if _mul_safe(arr, int(factor), *others):
        return arr * np.int64(factor)
    return arr.astype(object) * factor


def _stage_masks(b: _Batch, th: Thresholds, union_mode: str) -> tuple[dict, np.ndarray]:
    i, j = b.i, b.j
    x0a, y0a, x0b, y0b = b.x[i], b.y[i], b.x[j], b.y[j]
    wa, ha, wb, hb = b.w[i], b.h[i], b.w[j], b.h[j]
    area_a, area_b = wa * ha, wb * hb
    iw = np.minimum(x0a + wa, x0b + wb) - np.maximum(x0a, x0b)
    ih = np.minimum(y0a + ha, y0b + hb) - np.maximum(y0a, y0b)
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0)
    if union_mode == "exact":
        union = area_a + area_b - inter
    elif union_mode == "enclosing_box":
        union = (np.maximum(x0a + wa, x0b + wb) - np.minimum(x0a, x0b)) * (
            np.maximum(y0a + ha, y0b + hb) - np.minimum(y0a, y0b)
        )
    else:
        raise ValueError(f"unknown union_mode {union_mode!r}; expected one of {UNION_MODES}")
    lo, hi = np.minimum(area_a, area_b), np.maximum(area_a, area_b)

    tv, tu, to, ts = th.tau_v, th.tau_u, th.tau_o, th.tau_s
    vis = _scaled(union, tv.denominator) > _scaled(b.img_area, tv.numerator)

    sem = b.cat[i] != b.cat[j]

    dx = (2 * x0a + wa) - (2 * x0b + wb)
    dy = (2 * y0a + ha) - (2 * y0b + hb)
    d2 = dx * dx + dy * dy
    l2 = np.minimum(wa * wa + ha * ha, wb * wb + hb * hb)
    clar = (_scaled(d2, tu.denominator**2) < _scaled(l2, 4 * tu.numerator**2)) & (l2 > 0)

    ovl = (_scaled(inter, to.denominator) < _scaled(lo, to.numerator)) & (lo > 0)
    bal = (_scaled(lo, ts.denominator) > _scaled(hi, ts.numerator)) & (hi > 0)

    masks = {
        "visual_significance": np.asarray(vis, dtype=bool),
        "semantic_distinction": sem,
        "spatial_clarity": np.asarray(clar, dtype=bool),
        "minimal_overlap": np.asarray(ovl, dtype=bool),
        "size_balance": np.asarray(bal, dtype=bool),
    }
    degenerate = (l2 == 0) | (lo == 0)
    return masks, degenerate


def _run_chunk(items, th, union_mode, relation_rule, order):
    stats = StageStats(dropped_per_stage={s: 0 for s in order})
    b = _Batch(items)
    stats.candidates_in = len(b)
    if not len(b):
        return [], stats
    masks, degenerate = _stage_masks(b, th, union_mode)
    alive = np.ones(len(b), dtype=bool)
    for stage in order:
        fail = alive & ~masks[stage]
        stats.dropped_per_stage[stage] = int(fail.sum())
        alive &= masks[stage]
    stats.survivors = int(alive.sum())
    n_degen = int(degenerate.sum())
    if n_degen:
        stats.flags["degenerate_geometry"] = n_degen

    out = []
    for p in np.flatnonzero(alive):
        image, objs = items[b.owner[p]]
        a, o = objs[b.local[p, 0]], objs[b.local[p, 1]]
        tok, degen = classify_relation_flagged(a.bbox, o.bbox, relation_rule)
        flags = frozenset({"degenerate_relation"}) if degen else frozenset()
        if degen:
            stats.flags["degenerate_relation"] += 1
        out.append(
            SpatialDescriptor(
                image.image_id, int(b.k[p]), a.category_name, a.bbox, tok,
                o.category_name, o.bbox, flags,
            )
        )
    return out, stats


def default_threads() -> int:
    return max(1, int(os.environ.get("SPATIALCURATE_THREADS", "1")))


def run_pipeline(
    dataset: DatasetIndex | Iterable[tuple[ImageRecord, Sequence]],
    thresholds: Thresholds = Thresholds(),
    union_mode: str = "exact",
    relation_rule: str = "octant",
    threads: int | None = None,
    order: Sequence[str] = STAGES,
    chunk_images: int = 4096,
) -> tuple[list[SpatialDescriptor], StageStats]:
    """Filter every candidate pair through the constraints in ``order``.

    A pair dropped by several constraints is charged to the first of them.
    Descriptors come back sorted by ``(image_id, pair_index)`` whatever the
    thread count.
    """
    if sorted(order) != sorted(STAGES):
        raise ValueError(f"order must be a permutation of {STAGES}")
    if union_mode not in UNION_MODES:
        raise ValueError(f"unknown union_mode {union_mode!r}; expected one of {UNION_MODES}")
    threads = threads or default_threads()
    items = [(im, tuple(sorted(objs, key=lambda o: o.instance_id))) for im, objs in dataset]
    for im, _ in items:
        if im.width * im.height <= 0:
            raise ValueError(f"image {im.image_id} has zero area")
    items.sort(key=lambda t: t[0].image_id)
    chunks = [items[s : s + chunk_images] for s in range(0, len(items), chunk_images)]

    work = lambda c: _run_chunk(c, thresholds, union_mode, relation_rule, order)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    descriptors: list[SpatialDescriptor] = []
    stats = StageStats(dropped_per_stage={s: 0 for s in order})
    for descs, st in results:
        descriptors.extend(descs)
        stats.merge(st)
    log.info("pipeline: %d candidates -> %d survivors", stats.candidates_in, stats.survivors)
    return descriptors, stats


def run_pipeline_reference(
    dataset,
    thresholds: Thresholds = Thresholds(),
    union_mode: str = "exact",
    relation_rule: str = "octant",
    order: Sequence[str] = STAGES,
) -> tuple[list[SpatialDescriptor], StageStats]:
    """Pair-at-a-time version built from the scalar predicates; slow, used to check ``run_pipeline``."""
    from .pairing import enumerate_pairs

    stats = StageStats(dropped_per_stage={s: 0 for s in order})
    out = []
    for image, objs in sorted(dataset, key=lambda t: t[0].image_id):
        for pair in enumerate_pairs(image, objs, relation_rule):
            stats.candidates_in += 1
            a, b = pair.subject.bbox, pair.object.bbox
            if min(geo.area(a), geo.area(b)) == 0 or _clarity(a, b, thresholds.tau_u)[1]:
                stats.flags["degenerate_geometry"] += 1
            failed = first_failure(pair, image, thresholds, union_mode, order)
            if failed:
                stats.dropped_per_stage[failed] += 1
                continue
            stats.survivors += 1
            if "degenerate_relation" in pair.flags:
                stats.flags["degenerate_relation"] += 1
            out.append(
                SpatialDescriptor(
                    image.image_id, pair.pair_index, pair.subject.category_name, pair.subject.bbox,
                    pair.relation, pair.object.category_name, pair.object.bbox, pair.flags,
                )
            )
    return out, stats


# Stage counts published for COCO 2017 train at the default thresholds.
COCO2017_TRAIN_REFERENCE = {
    "candidates": 2_468_858,
    "drops": {
        "visual_significance": 1_929_560,
        "semantic_distinction": 169_973,
        "spatial_clarity": 119_457,
        "minimal_overlap": 148_376,
        "size_balance": 73_464,
    },
    "survivors": 28_028,
}
