"""Turn surviving descriptors into crop rectangles and captions."""
from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constraints import SpatialDescriptor
from .geometry import Rect, enclosing_square
from .ingest import ImageRecord
from .pairing import RelationToken

log = logging.getLogger(__name__)

# Three phrasings per token. The third form names the object first and is
# prefixed with "an image of" so no two tokens share a surface pattern.
DEFAULT_TEMPLATES: dict[str, list[str]] = {
    "<left>": [
        "a {subject} to the left of a {object}",
        "a {subject} on the left side of a {object}",
        "an image of a {object} to the right of a {subject}",
    ],
    "<right>": [
        "a {subject} to the right of a {object}",
        "a {subject} on the right side of a {object}",
        "an image of a {object} to the left of a {subject}",
    ],
    "<above>": [
        "a {subject} on top of a {object}",
        "a {subject} above a {object}",
        "an image of a {object} below a {subject}",
    ],
    "<below>": [
        "a {subject} below a {object}",
        "a {subject} underneath a {object}",
        "an image of a {object} above a {subject}",
    ],
    "<left+above>": [
        "a {subject} to the upper left of a {object}",
        "a {subject} above and to the left of a {object}",
        "an image of a {object} to the lower right of a {subject}",
    ],
    "<right+above>": [
        "a {subject} to the upper right of a {object}",
        "a {subject} above and to the right of a {object}",
        "an image of a {object} to the lower left of a {subject}",
    ],
    "<left+below>": [
        "a {subject} to the lower left of a {object}",
        "a {subject} below and to the left of a {object}",
        "an image of a {object} to the upper right of a {subject}",
    ],
    "<right+below>": [
        "a {subject} to the lower right of a {object}",
        "a {subject} below and to the right of a {object}",
        "an image of a {object} to the upper left of a {subject}",
    ],
    "<and>": [
        "a {subject} and a {object}",
        "a photo of a {subject} and a {object}",
        "an image with a {subject} and a {object}",
    ],
}

_AN_EXCEPTIONS = {"hour", "honest", "honor", "heir"}
_A_EXCEPTIONS = {"one", "unicorn", "uniform", "unit", "university", "user", "european", "ewe", "u"}


def article(noun: str) -> str:
    word = noun.split()[0].lower() if noun.strip() else ""
    if word in _AN_EXCEPTIONS:
        return "an"
    if word in _A_EXCEPTIONS or word.startswith(("uni", "use", "eu")):
        return "a"
    return "an" if word[:1] in "aeiou" and word else "a"


_SLOT_ARTICLE = re.compile(r"\b(?:a|an) \{(subject|object)\}")


class TemplateError(ValueError):
    pass


@dataclass
class TemplatePool:
    templates: dict[str, list[str]]

    def __post_init__(self):
        for tok in RelationToken:
            ts = self.templates.get(tok.value)
            if not ts:
                raise TemplateError(f"template pool has no template for {tok.value}")
            for t in ts:
                if t.count("{subject}") != 1 or t.count("{object}") != 1:
                    raise TemplateError(f"template {t!r} must use {{subject}} and {{object}} exactly once")

    @classmethod
    def default(cls) -> "TemplatePool":
        return cls({k: list(v) for k, v in DEFAULT_TEMPLATES.items()})

    @classmethod
    def from_json(cls, path: str | Path) -> "TemplatePool":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def for_token(self, tok: RelationToken) -> list[str]:
        return self.templates[RelationToken(tok).value]


def render(template: str, subject: str, obj: str) -> str:
    """Fill a template, fixing the article in front of each slot."""
    names = {"subject": subject, "object": obj}
    out = _SLOT_ARTICLE.sub(lambda m: f"{article(names[m.group(1)])} {{{m.group(1)}}}", template)
    return out.replace("{subject}", subject).replace("{object}", obj)


def _template_regex(template: str, vocab_alt: str) -> re.Pattern:
    parts = re.split(r"(\{subject\}|\{object\})", _SLOT_ARTICLE.sub(lambda m: "{" + m.group(1) + "}", template))
    rx = []
    for p in parts:
        if p in ("{subject}", "{object}"):
            rx.append(rf"(?:an? )(?P<{p[1:-1]}>{vocab_alt})")
        else:
            rx.append(re.escape(p))
    return re.compile("^" + "".join(rx) + "$")


def parse_prompt(prompt: str, pool: TemplatePool, vocabulary: Iterable[str]) -> list[tuple[RelationToken, str, str]]:
    """Every (token, subject, object) reading of ``prompt`` under ``pool``."""
    vocab = sorted(set(vocabulary), key=len, reverse=True)
    alt = "|".join(re.escape(v) for v in vocab)
    found = []
    for key, templates in pool.templates.items():
        for t in templates:
            m = _template_regex(t, alt).match(prompt)
            if m and render(t, m["subject"], m["object"]) == prompt:
                found.append((RelationToken(key), m["subject"], m["object"]))
    return sorted(set(found), key=lambda r: (r[0].value, r[1], r[2]))


@dataclass(frozen=True)
class DecodeConfig:
    and_probability: float = 0.1
    max_expansion: float = 0.10
    global_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.and_probability <= 1.0:
            raise ValueError(f"and_probability must be in [0, 1], got {self.and_probability}")
        if not 0.0 <= self.max_expansion <= 0.10:
            raise ValueError(f"max_expansion must be in [0, 0.10], got {self.max_expansion}")


@dataclass(frozen=True)
class ManifestRecord:
    image_id: int
    pair_index: int
    file_name: str
    crop: Rect
    prompt: str
    relation: RelationToken
    original_relation: RelationToken
    subject_category: str
    subject_box: Rect
    object_category: str
    object_box: Rect
    expansion: float
    seed_material: tuple[int, int, int]
    flags: frozenset = field(default_factory=frozenset)

    def as_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "pair_index": self.pair_index,
            "file_name": self.file_name,
            "crop": self.crop.as_dict(),
            "prompt": self.prompt,
            "relation": self.relation.value,
            "original_relation": self.original_relation.value,
            "subject": {"category": self.subject_category, "bbox": self.subject_box.as_dict()},
            "object": {"category": self.object_category, "bbox": self.object_box.as_dict()},
            "expansion": self.expansion,
            "seed_material": list(self.seed_material),
            "flags": sorted(self.flags),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ManifestRecord":
        return cls(
            d["image_id"], d["pair_index"], d.get("file_name", ""), Rect.from_dict(d["crop"]),
            d["prompt"], RelationToken(d["relation"]), RelationToken(d["original_relation"]),
            d["subject"]["category"], Rect.from_dict(d["subject"]["bbox"]),
            d["object"]["category"], Rect.from_dict(d["object"]["bbox"]),
            d["expansion"], tuple(d["seed_material"]), frozenset(d["flags"]),
        )


def record_seed(global_seed: int, image_id: int, pair_index: int) -> int:
    """Stable 64-bit seed; independent of scheduling and of Python's hash salt."""
    material = f"{global_seed}:{image_id}:{pair_index}".encode()
    return int.from_bytes(hashlib.blake2b(material, digest_size=8).digest(), "little")


def decode(
    d: SpatialDescriptor,
    image: ImageRecord,
    pool: TemplatePool,
    cfg: DecodeConfig = DecodeConfig(),
) -> ManifestRecord:
    rng = np.random.default_rng(record_seed(cfg.global_seed, d.image_id, d.pair_index))
    # fixed draw order: substitution, template, expansion
    swap_u, tmpl_u, exp_u = rng.random(3)
    tok = RelationToken.AND if swap_u < cfg.and_probability else d.relation
    choices = pool.for_token(tok)
    template = choices[min(int(tmpl_u * len(choices)), len(choices) - 1)]
    expansion = float(exp_u) * cfg.max_expansion
    sq = enclosing_square(d.subject_box, d.object_box, image, expansion)
    flags = set(d.flags)
    if sq.truncated:
        flags.add("crop_truncated")
    if tok is RelationToken.AND and d.relation is not RelationToken.AND:
        flags.add("and_substituted")
    return ManifestRecord(
        image_id=d.image_id,
        pair_index=d.pair_index,
        file_name=image.file_name,
        crop=sq.rect,
        prompt=render(template, d.subject_name, d.object_name),
        relation=tok,
        original_relation=d.relation,
        subject_category=d.subject_name,
        subject_box=d.subject_box,
        object_category=d.object_name,
        object_box=d.object_box,
        expansion=expansion,
        seed_material=(cfg.global_seed, d.image_id, d.pair_index),
        flags=frozenset(flags),
    )


def decode_all(
    descriptors: Sequence[SpatialDescriptor],
    images: Mapping[int, ImageRecord],
    pool: TemplatePool,
    cfg: DecodeConfig = DecodeConfig(),
    threads: int = 1,
) -> list[ManifestRecord]:
    work = lambda d: decode(d, images[d.image_id], pool, cfg)
    if threads > 1 and len(descriptors) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            recs = list(ex.map(work, descriptors, chunksize=512))
    else:
        recs = [work(d) for d in descriptors]
    recs.sort(key=lambda r: (r.image_id, r.pair_index))
    return recs


def manifest_line(rec: ManifestRecord) -> str:
    return json.dumps(rec.as_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def emit_manifest(records: Iterable[ManifestRecord], out_path: str | Path) -> int:
    n = 0
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(manifest_line(rec) + "\n")
            n += 1
    return n


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    with open(path, encoding="utf-8") as fh:
        return [ManifestRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def crop_pixels(record: ManifestRecord, images_dir: str | Path | None, out_dir: str | Path) -> Path | None:
    """Cut the crop out of the source image; ``None`` when skipped or missing."""
    if images_dir is None or not Path(images_dir).is_dir():
        return None
    from PIL import Image

    src = Path(images_dir) / record.file_name
    if not record.file_name or not src.is_file():
        log.warning("image %s for record (%d, %d) not found", src, record.image_id, record.pair_index)
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{record.image_id:012d}_{record.pair_index:05d}"
    c = record.crop
    with Image.open(src) as im:
        im.crop((c.x, c.y, c.x + c.w, c.y + c.h)).save(out_dir / f"{stem}.png")
    with open(out_dir / f"{stem}.json", "w", encoding="utf-8") as fh:
        json.dump({"prompt": record.prompt, "crop": c.as_dict(), "flags": sorted(record.flags)}, fh, sort_keys=True)
    return out_dir / f"{stem}.png"
