"""Prompt-variation retrieval: does an embedding rank the logically
equivalent rewording of a spatial prompt above its corruptions?

Embeddings come from files, one JSON object per line::

    {"group_id": 0, "variant": "base", "vector": [0.1, ...]}
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .decoder import article
from .tenor import sinusoidal_pe

RELATIONS = ("left", "right", "above", "below")
OPPOSITE_RELATION = {"left": "right", "right": "left", "above": "below", "below": "above"}
RELATION_PHRASE = {
    "left": "to the left of",
    "right": "to the right of",
    "above": "above",
    "below": "below",
}
VARIANTS = ("base", "rephrased", "negated", "swapped")
# tie order when two variations are equally close to the base
CANDIDATES = ("rephrased", "negated", "swapped")
METRICS = ("cosine", "dot", "euclidean")


def spatial_phrase(a: str, relation: str, b: str) -> str:
    return f"{article(a)} {a} {RELATION_PHRASE[relation]} {article(b)} {b}"


@dataclass(frozen=True)
class PromptGroup:
    group_id: int
    base: str
    rephrased: str
    negated: str
    swapped: str
    categories: tuple[str, str]
    relation: str

    @classmethod
    def build(cls, group_id: int, a: str, b: str, relation: str) -> "PromptGroup":
        opp = OPPOSITE_RELATION[relation]
        return cls(
            group_id,
            base=spatial_phrase(a, relation, b),
            rephrased=spatial_phrase(b, opp, a),
            negated=spatial_phrase(a, opp, b),
            swapped=spatial_phrase(b, relation, a),
            categories=(a, b),
            relation=relation,
        )

    def text(self, variant: str) -> str:
        return getattr(self, variant)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["categories"] = list(self.categories)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PromptGroup":
        return cls(
            d["group_id"], d["base"], d["rephrased"], d["negated"], d["swapped"],
            tuple(d["categories"]), d["relation"],
        )


def generate_groups(categories: Sequence[str], mode: str = "paper") -> list[PromptGroup]:
    """``paper``: one group per ordered category pair, relation cycling with the
    group index (80 categories give 6,320 groups). ``full``: every ordered pair
    with each of the four relations."""
    if len(categories) < 2:
        raise ValueError("need at least two categories")
    if len(set(categories)) != len(categories):
        dup = sorted({c for c in categories if list(categories).count(c) > 1})
        raise ValueError(f"duplicate category names: {dup}")
    groups = []
    for a, b in permutations(categories, 2):
        if mode == "paper":
            groups.append(PromptGroup.build(len(groups), a, b, RELATIONS[len(groups) % 4]))
        elif mode == "full":
            for rel in RELATIONS:
                groups.append(PromptGroup.build(len(groups), a, b, rel))
        else:
            raise ValueError(f"unknown mode {mode!r}; expected 'paper' or 'full'")
    return groups


def write_groups(groups: Iterable[PromptGroup], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for g in groups:
            fh.write(json.dumps(g.as_dict(), sort_keys=True) + "\n")
            n += 1
    return n


def read_groups(path: str | Path) -> list[PromptGroup]:
    with open(path, encoding="utf-8") as fh:
        return [PromptGroup.from_dict(json.loads(l)) for l in fh if l.strip()]


@dataclass(frozen=True)
class EmbeddingRecord:
    group_id: int
    variant: str
    vector: np.ndarray


def read_embeddings(path: str | Path) -> Iterator[EmbeddingRecord]:
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            d = json.loads(line)
            if d["variant"] not in VARIANTS:
                raise ValueError(f"line {lineno}: unknown variant {d['variant']!r}")
            vec = np.asarray(d["vector"], dtype=np.float32)
            if vec.ndim != 1 or not np.all(np.isfinite(vec)):
                raise ValueError(f"line {lineno}: vector must be a flat list of finite numbers")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ValueError(f"line {lineno}: dimension {vec.size} differs from {dim}")
            yield EmbeddingRecord(int(d["group_id"]), d["variant"], vec)


def write_embeddings(records: Iterable[EmbeddingRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            vec = [float(v) for v in np.asarray(r.vector, dtype=np.float32)]
            fh.write(json.dumps({"group_id": r.group_id, "variant": r.variant, "vector": vec}) + "\n")
            n += 1
    return n


@dataclass
class RetrievalReport:
    counts: dict = field(default_factory=lambda: {c: 0 for c in CANDIDATES})
    groups_evaluated: int = 0
    skipped: int = 0
    metric: str = "cosine"

    @property
    def correct_rate(self) -> float:
        return self.counts["rephrased"] / self.groups_evaluated if self.groups_evaluated else 0.0

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "counts": dict(self.counts),
            "groups_evaluated": self.groups_evaluated,
            "skipped": self.skipped,
            "correct_rate": self.correct_rate,
        }


def similarity(a: np.ndarray, b: np.ndarray, metric: str = "cosine") -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if metric == "cosine":
        return float(a @ b) / (math.sqrt(float(a @ a)) * math.sqrt(float(b @ b)))
    if metric == "dot":
        return float(a @ b)
    if metric == "euclidean":
        return -float(np.linalg.norm(a - b))
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def winner(vectors: dict, metric: str = "cosine") -> str:
    base = vectors["base"]
    best, best_sim = None, -math.inf
    for c in CANDIDATES:
        s = similarity(base, vectors[c], metric)
        if s > best_sim:
            best, best_sim = c, s
    return best


def retrieve(
    groups: Sequence[PromptGroup] | Iterable[int],
    embeddings: Iterable[EmbeddingRecord],
    metric: str = "cosine",
) -> RetrievalReport:
    """Count which variation lands nearest to each base prompt.

    Groups missing a variant, or holding a zero vector, are counted as skipped.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    ids = [g.group_id if isinstance(g, PromptGroup) else int(g) for g in groups]
    by_group: dict[int, dict] = defaultdict(dict)
    wanted = set(ids)
    for rec in embeddings:
        if rec.group_id in wanted:
            by_group[rec.group_id][rec.variant] = rec.vector
    report = RetrievalReport(metric=metric)
    for gid in ids:
        vecs = by_group.get(gid, {})
        if any(v not in vecs for v in VARIANTS):
            report.skipped += 1
            continue
        if any(not np.any(vecs[v]) for v in VARIANTS):
            report.skipped += 1
            continue
        report.counts[winner(vecs, metric)] += 1
        report.groups_evaluated += 1
    return report


def report_from_counts(rephrased: int, negated: int, swapped: int) -> RetrievalReport:
    r = RetrievalReport(counts={"rephrased": rephrased, "negated": negated, "swapped": swapped})
    r.groups_evaluated = rephrased + negated + swapped
    return r


# -- reference embedders for tests and demos ---------------------------------

def _tokens(prompt: str) -> list[str]:
    return prompt.lower().split()


def _token_vector(token: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "little")
    return np.random.default_rng(seed).standard_normal(dim)


def bag_of_words_embedding(prompt: str, dim: int = 64) -> np.ndarray:
    """Order-blind: any permutation of the tokens gives the same vector."""
    v = np.zeros(dim)
    # sorted so float summation order is also permutation-free
    for t in sorted(_tokens(prompt)):
        v += _token_vector(t, dim)
    return v


def order_sensitive_embedding(prompt: str, dim: int = 8) -> np.ndarray:
    """Sum of hashed token vectors, each multiplied elementwise by the
    sinusoidal code of its position."""
    if dim < 8:
        raise ValueError("dim must be at least 8")
    if dim % 2:
        raise ValueError("dim must be even")
    v = np.zeros(dim)
    for pos, t in enumerate(_tokens(prompt)):
        v += _token_vector(t, dim) * sinusoidal_pe(pos, dim)
    return v


order_sensitive_oracle = order_sensitive_embedding


def embed_groups(groups: Iterable[PromptGroup], embedder, dim: int = 64) -> list[EmbeddingRecord]:
    return [
        EmbeddingRecord(g.group_id, v, embedder(g.text(v), dim).astype(np.float32))
        for g in groups
        for v in VARIANTS
    ]
