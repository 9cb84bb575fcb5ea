"""Plain-text tables, JSON files and matplotlib figures for every report."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps PNG bytes identical across runs
_PNG_META = {"Software": None}


def text_table(header: Sequence[str], rows: Sequence[Sequence], title: str = "") -> str:
    cells = [[str(c) for c in header]] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    line = lambda r: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
    out = [title] if title else []
    out += [line(cells[0]), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in cells[1:]]
    return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}"
    if isinstance(v, int):
        return f"{v:,}"
    return str(v)


def write_json(obj, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


# -- stage statistics ---------------------------------------------------------

def stats_table(stats: dict, reference: dict | None = None) -> str:
    rows = [("candidates", stats["candidates"])]
    for stage, n in stats["drops"].items():
        rows.append((f"- {stage}", n))
    rows.append(("survivors", stats["survivors"]))
    if reference:
        ref = [reference["candidates"], *reference["drops"].values(), reference["survivors"]]
        full = []
        for (name, n), r in zip(rows, ref):
            dev = 100.0 * (n - r) / r if r else 0.0
            full.append((name, n, r, f"{dev:+.2f}%"))
        return text_table(("stage", "count", "reference", "deviation"), full)
    return text_table(("stage", "count"), rows)


def stats_figure(stats: dict, path: str | Path) -> Path:
    stages = list(stats["drops"])
    remaining = [stats["candidates"]]
    for s in stages:
        remaining.append(remaining[-1] - stats["drops"][s])
    labels = ["candidates"] + [s.replace("_", "\n") for s in stages]
    fig, ax = plt.subplots(figsize=(8, 4))
    bars = ax.bar(range(len(remaining)), remaining, color="#4c72b0")
    bars[-1].set_color("#dd8452")
    ax.set_xticks(range(len(remaining)), labels, fontsize=8)
    ax.set_ylabel("pairs remaining after stage")
    ax.set_yscale("log" if remaining[0] > 0 and remaining[-1] > 0 else "linear")
    for b, v in zip(bars, remaining):
        ax.annotate(f"{v:,}", (b.get_x() + b.get_width() / 2, max(v, 1)), ha="center", va="bottom", fontsize=7)
    ax.set_title("Pair survival through the constraint stages")
    return _save(fig, path)


def relation_figure(counts: dict, path: str | Path) -> Path:
    keys = list(counts)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(range(len(keys)), [counts[k] for k in keys], color="#55a868")
    ax.set_xticks(range(len(keys)), keys, rotation=30, fontsize=8)
    ax.set_ylabel("manifest records")
    ax.set_title("Relation tokens in the manifest")
    return _save(fig, path)


# -- proxy retrieval ----------------------------------------------------------

def retrieval_table(reports: dict) -> str:
    rows = []
    for name, r in reports.items():
        c = r["counts"]
        rows.append((name, c["rephrased"], c["negated"], c["swapped"], f"{100 * r['correct_rate']:.2f}%", r["skipped"]))
    return text_table(("encoder", "rephrased", "negated relation", "swapped entities", "Correct", "skipped"), rows)


def retrieval_figure(reports: dict, path: str | Path) -> Path:
    names = list(reports)
    variants = ("rephrased", "negated", "swapped")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.8 / len(variants)
    for k, v in enumerate(variants):
        ax.bar(
            [i + k * width for i in range(len(names))],
            [reports[n]["counts"][v] for n in names],
            width=width, label=v,
        )
    ax.set_xticks([i + width for i in range(len(names))], names)
    ax.set_ylabel("groups where variation is nearest to base")
    ax.legend(fontsize=8)
    ax.set_title("Most similar prompt variation")
    return _save(fig, path)


# -- VISOR ----------------------------------------------------------------------

VISOR_COLUMNS = ("uncond", "cond", "1", "2", "3", "4", "OA")


def visor_table(rows: dict) -> str:
    return text_table(("method",) + VISOR_COLUMNS, [(n, *(p[c] for c in VISOR_COLUMNS)) for n, p in rows.items()])


def visor_figure(rows: dict, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, p in rows.items():
        ax.plot([1, 2, 3, 4], [p[str(n)] for n in range(1, 5)], marker="o", label=name)
    ax.set_xticks([1, 2, 3, 4])
    ax.set_xlabel("n (images of 4 correct)")
    ax.set_ylabel("VISOR_n (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)
    return _save(fig, path)
