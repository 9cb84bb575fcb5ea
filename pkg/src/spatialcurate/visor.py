"""VISOR-style spatial scores from per-image detection records.

Input is JSONL, one generated image per line::

    {"prompt_id": "p0", "image_index": 0,
     "expected": {"a": "dog", "relation": "left", "b": "cat"},
     "detections": [{"category": "dog", "bbox": {"x": 1, "y": 2, "w": 3, "h": 4},
                     "confidence": 0.9}, ...]}
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

IMAGES_PER_PROMPT = 4
RELATIONS = ("left", "right", "above", "below")


@dataclass(frozen=True)
class Detection:
    category: str
    box: tuple[float, float, float, float]  # x, y, w, h; may be fractional
    confidence: float

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.box
        return x + w / 2, y + h / 2


@dataclass(frozen=True)
class TrialRecord:
    prompt_id: str
    image_index: int
    detections: tuple[Detection, ...]
    expected: tuple[str, str, str]  # (a, relation, b)

    def __post_init__(self):
        if self.expected[1] not in RELATIONS:
            raise ValueError(f"unknown relation {self.expected[1]!r}")
        for d in self.detections:
            if not 0.0 <= d.confidence <= 1.0:
                raise ValueError(f"confidence {d.confidence} outside [0, 1]")


def relation_holds(a_center, b_center, relation: str) -> bool:
    """Strict centroid comparison on the relevant axis; image y grows downward."""
    (ax, ay), (bx, by) = a_center, b_center
    if relation == "left":
        return ax < bx
    if relation == "right":
        return ax > bx
    if relation == "above":
        return ay < by
    if relation == "below":
        return ay > by
    raise ValueError(f"unknown relation {relation!r}")


def _best(dets: Sequence[Detection], category: str, conf_threshold: float) -> Detection | None:
    best = None
    for d in dets:
        if d.category == category and d.confidence >= conf_threshold:
            if best is None or d.confidence > best.confidence:
                best = d
    return best


def judge_trial(
    t: TrialRecord,
    conf_threshold: float = 0.1,
    rule: Callable[[tuple, tuple, str], bool] = relation_holds,
) -> tuple[bool, bool]:
    """``(objects_present, relation_correct)`` for one image."""
    a, rel, b = t.expected
    da = _best(t.detections, a, conf_threshold)
    db = _best(t.detections, b, conf_threshold)
    if da is None or db is None:
        return False, False
    return True, bool(rule(da.center, db.center, rel))


@dataclass
class VisorScores:
    """Exact rational scores; ``as_percent`` for reporting."""

    oa: Fraction
    uncond: Fraction
    cond: Fraction
    visor_n: dict  # n -> Fraction
    n_prompts: int = 0
    n_images: int = 0
    n_present: int = 0
    n_correct: int = 0

    def as_percent(self, digits: int = 2) -> dict:
        pct = lambda f: round(100 * float(f), digits)
        out = {"uncond": pct(self.uncond), "cond": pct(self.cond)}
        out.update({str(n): pct(v) for n, v in sorted(self.visor_n.items())})
        out["OA"] = pct(self.oa)
        return out

    def as_dict(self) -> dict:
        return {
            "percent": self.as_percent(),
            "counts": {
                "prompts": self.n_prompts,
                "images": self.n_images,
                "objects_present": self.n_present,
                "relation_correct": self.n_correct,
            },
        }


class AggregationError(ValueError):
    pass


def aggregate_outcomes(per_prompt: dict) -> VisorScores:
    """Scores from ``{prompt_id: [(present, correct), ...]}`` with four images each."""
    bad = sorted(str(p) for p, v in per_prompt.items() if len(v) != IMAGES_PER_PROMPT)
    if bad:
        raise AggregationError(f"prompts without exactly {IMAGES_PER_PROMPT} images: {bad}")
    n_prompts = len(per_prompt)
    n_images = n_prompts * IMAGES_PER_PROMPT
    present = sum(p for v in per_prompt.values() for p, _ in v)
    correct = sum(c for v in per_prompt.values() for _, c in v)
    at_least = {n: 0 for n in range(1, IMAGES_PER_PROMPT + 1)}
    for v in per_prompt.values():
        k = sum(c for _, c in v)
        for n in range(1, k + 1):
            at_least[n] += 1
    frac = lambda num, den: Fraction(num, den) if den else Fraction(0)
    return VisorScores(
        oa=frac(present, n_images),
        uncond=frac(correct, n_images),
        cond=frac(correct, present),
        visor_n={n: frac(c, n_prompts) for n, c in at_least.items()},
        n_prompts=n_prompts,
        n_images=n_images,
        n_present=present,
        n_correct=correct,
    )


def aggregate(trials: Iterable[TrialRecord], conf_threshold: float = 0.1, rule=relation_holds) -> VisorScores:
    per_prompt: dict = defaultdict(dict)
    for t in trials:
        if t.image_index in per_prompt[t.prompt_id]:
            raise AggregationError(f"prompt {t.prompt_id} has image_index {t.image_index} twice")
        per_prompt[t.prompt_id][t.image_index] = judge_trial(t, conf_threshold, rule)
    return aggregate_outcomes({p: [v[i] for i in sorted(v)] for p, v in per_prompt.items()})


def replay_patterns(correct_per_prompt: Sequence[Sequence[int]], present_per_prompt=None) -> VisorScores:
    """Scores from bare correctness patterns such as ``[[1, 1, 0, 0], ...]``.

    Without presence data every correct image counts as present and nothing else does.
    """
    per_prompt = {}
    for i, pattern in enumerate(correct_per_prompt):
        pres = present_per_prompt[i] if present_per_prompt is not None else pattern
        if len(pres) != len(pattern):
            raise ValueError(f"prompt {i}: presence and correctness lengths differ")
        per_prompt[i] = [(bool(p) or bool(c), bool(c)) for p, c in zip(pres, pattern)]
    return aggregate_outcomes(per_prompt)


def patterns_for_table_row(visor_n_pct: Sequence[float], oa_pct: float, n_prompts: int = 10000):
    """Correctness/presence patterns reproducing a published row to its 2-decimal rounding.

    ``at_least[n] = round(visor_n * P)`` prompts have >= n correct images; images
    marked present are the correct ones plus enough extras to hit OA.
    """
    if not all(0 <= v <= 100 for v in (*visor_n_pct, oa_pct)):
        raise ValueError("percentages must lie in [0, 100]")
    at_least = [round(v / 100 * n_prompts) for v in visor_n_pct] + [0]
    exactly = [at_least[k] - at_least[k + 1] for k in range(IMAGES_PER_PROMPT)]
    patterns = []
    for k, count in zip(range(1, IMAGES_PER_PROMPT + 1), exactly):
        patterns += [[1] * k + [0] * (IMAGES_PER_PROMPT - k)] * count
    patterns += [[0] * IMAGES_PER_PROMPT] * (n_prompts - len(patterns))
    need_present = round(oa_pct / 100 * n_prompts * IMAGES_PER_PROMPT)
    extra = need_present - sum(map(sum, patterns))
    if extra < 0:
        raise ValueError("OA below the share of correct images")
    presence = []
    for pat in patterns:
        row = list(pat)
        for i in range(IMAGES_PER_PROMPT):
            if extra > 0 and not row[i]:
                row[i] = 1
                extra -= 1
        presence.append(row)
    if extra > 0:
        raise ValueError("OA too high for the number of prompts")
    return patterns, presence


def read_trials(path: str | Path) -> list[TrialRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            dets = tuple(
                Detection(
                    det["category"],
                    tuple(float(det["bbox"][k]) for k in ("x", "y", "w", "h")),
                    float(det["confidence"]),
                )
                for det in d.get("detections", [])
            )
            e = d["expected"]
            out.append(TrialRecord(str(d["prompt_id"]), int(d["image_index"]), dets, (e["a"], e["relation"], e["b"])))
    return out


def write_trials(trials: Iterable[TrialRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(
                json.dumps(
                    {
                        "prompt_id": t.prompt_id,
                        "image_index": t.image_index,
                        "expected": {"a": t.expected[0], "relation": t.expected[1], "b": t.expected[2]},
                        "detections": [
                            {"category": d.category, "bbox": dict(zip("xywh", d.box)), "confidence": d.confidence}
                            for d in t.detections
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def mirror_horizontally(t: TrialRecord, image_width: float) -> TrialRecord:
    dets = tuple(
        Detection(d.category, (image_width - d.box[0] - d.box[2], d.box[1], d.box[2], d.box[3]), d.confidence)
        for d in t.detections
    )
    return TrialRecord(t.prompt_id, t.image_index, dets, t.expected)
