"""COCO instances ingestion into per-image lists of valid objects."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .geometry import Rect, area, clamp, rect_from_xywh
from .jsonstream import iter_top_level

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class ImageRecord:
    image_id: int
    width: int
    height: int
    file_name: str = ""


@dataclass(frozen=True, slots=True)
class ObjectInstance:
    instance_id: int
    image_id: int
    category_id: int
    category_name: str
    bbox: Rect
    is_crowd: bool = False


@dataclass(frozen=True)
class ValidityFilter:
    """Instance admission rule. Stricter settings only ever remove instances."""

    exclude_crowd: bool = True
    min_area: int = 1

    def reason(self, inst_area: int, is_crowd: bool) -> str | None:
        if self.exclude_crowd and is_crowd:
            return "crowd"
        if inst_area < max(self.min_area, 1):
            return "zero_area" if inst_area == 0 else "below_min_area"
        return None


@dataclass(frozen=True)
class Reject:
    instance_id: int
    reason: str


@dataclass
class DatasetIndex:
    images: dict[int, ImageRecord]
    instances: dict[int, tuple[ObjectInstance, ...]]
    categories: dict[int, str]
    rejects: list[Reject] = field(default_factory=list)

    def __iter__(self) -> Iterator[tuple[ImageRecord, tuple[ObjectInstance, ...]]]:
        for image_id in sorted(self.images):
            yield self.images[image_id], self.instances.get(image_id, ())

    def __len__(self) -> int:
        return len(self.images)

    @property
    def num_instances(self) -> int:
        return sum(len(v) for v in self.instances.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetIndex):
            return NotImplemented
        return (
            self.images == other.images
            and {k: v for k, v in self.instances.items() if v}
            == {k: v for k, v in other.instances.items() if v}
            and self.categories == other.categories
        )


class DatasetError(ValueError):
    pass


def _ann_tuple(ann: Mapping) -> tuple:
    # (id, image_id, category_id, bbox, iscrowd); bbox None when absent
    return (
        ann.get("id"),
        ann.get("image_id"),
        ann.get("category_id"),
        tuple(ann["bbox"]) if isinstance(ann.get("bbox"), (list, tuple)) else None,
        ann.get("iscrowd", 0),
    )


def build_index(
    images: Iterable[Mapping],
    annotations: Iterable[Mapping],
    categories: Iterable[Mapping],
    validity: ValidityFilter = ValidityFilter(),
) -> DatasetIndex:
    """Resolve, clamp and filter raw COCO records."""
    return _assemble(images, map(_ann_tuple, annotations), categories, validity)


def _assemble(images, ann_tuples, categories, validity) -> DatasetIndex:
    img_index: dict[int, ImageRecord] = {}
    for im in images:
        rec = ImageRecord(int(im["id"]), int(im["width"]), int(im["height"]), str(im.get("file_name", "")))
        if rec.width <= 0 or rec.height <= 0:
            raise DatasetError(f"image {rec.image_id} has non-positive size {rec.width}x{rec.height}")
        if rec.image_id in img_index:
            raise DatasetError(f"duplicate image id {rec.image_id}")
        img_index[rec.image_id] = rec

    cats: dict[int, str] = {}
    for c in categories:
        cats.setdefault(int(c["id"]), str(c["name"]))

    rejects: list[Reject] = []
    per_image: dict[int, list[ObjectInstance]] = {}
    for ann_id, image_id, cat_id, bbox, crowd in ann_tuples:
        if ann_id is None or image_id is None or cat_id is None:
            rejects.append(Reject(-1 if ann_id is None else int(ann_id), "missing_field"))
            continue
        ann_id, image_id, cat_id = int(ann_id), int(image_id), int(cat_id)
        if cat_id not in cats:
            rejects.append(Reject(ann_id, "unknown_category"))
            continue
        img = img_index.get(image_id)
        if img is None:
            rejects.append(Reject(ann_id, "unknown_image"))
            continue
        if bbox is None or len(bbox) != 4:
            rejects.append(Reject(ann_id, "bad_bbox"))
            continue
        box = clamp(rect_from_xywh(bbox), img.width, img.height)
        crowd = bool(crowd)
        why = validity.reason(area(box), crowd)
        if why:
            rejects.append(Reject(ann_id, why))
            continue
        per_image.setdefault(image_id, []).append(
            ObjectInstance(ann_id, image_id, cat_id, cats[cat_id], box, crowd)
        )

    instances = {
        k: tuple(sorted(v, key=lambda o: o.instance_id)) for k, v in per_image.items()
    }
    rejects.sort(key=lambda r: (r.instance_id, r.reason))
    return DatasetIndex(img_index, instances, dict(sorted(cats.items())), rejects)


def load_dataset(path: str | Path, validity: ValidityFilter = ValidityFilter()) -> DatasetIndex:
    """Stream a COCO instances JSON file.

    Segmentation payloads are dropped as each annotation is read, so peak memory
    tracks the number of boxes rather than the file size. Malformed JSON raises
    ``JSONStreamError`` carrying the byte offset of the fault.
    """
    images: list[dict] = []
    categories: list[dict] = []
    annotations: list[tuple] = []
    with open(path, "r", encoding="utf-8") as fh:
        for key, item in iter_top_level(fh, ("images", "annotations", "categories")):
            if not isinstance(item, dict):
                raise DatasetError(f"{key} entries must be objects")
            if key == "annotations":
                annotations.append(_ann_tuple(item))
            elif key == "images":
                images.append(item)
            else:
                categories.append(item)
    ds = _assemble(images, annotations, categories, validity)
    log.info(
        "loaded %d images, %d instances (%d rejected) from %s",
        len(ds.images), ds.num_instances, len(ds.rejects), path,
    )
    return ds


def category_table(dataset: DatasetIndex) -> list[tuple[int, str]]:
    return sorted(dataset.categories.items())


def write_rejects(dataset: DatasetIndex, path: str | Path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for r in dataset.rejects:
            fh.write(json.dumps({"instance_id": r.instance_id, "reason": r.reason}) + "\n")
    return len(dataset.rejects)


def dump_normalized(dataset: DatasetIndex, path: str | Path) -> None:
    """Write the post-validation form; ``load_normalized`` reads it back unchanged."""
    doc = {
        "categories": [{"id": k, "name": v} for k, v in dataset.categories.items()],
        "images": [
            {"id": im.image_id, "width": im.width, "height": im.height, "file_name": im.file_name}
            for im in (dataset.images[k] for k in sorted(dataset.images))
        ],
        "instances": [
            [o.instance_id, o.image_id, o.category_id, *o.bbox, int(o.is_crowd)]
            for _, objs in dataset
            for o in objs
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))


def load_normalized(path: str | Path) -> DatasetIndex:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    cats = {int(c["id"]): c["name"] for c in doc["categories"]}
    images = {
        int(im["id"]): ImageRecord(int(im["id"]), im["width"], im["height"], im["file_name"])
        for im in doc["images"]
    }
    per_image: dict[int, list[ObjectInstance]] = {}
    for iid, img_id, cid, x, y, w, h, crowd in doc["instances"]:
        per_image.setdefault(img_id, []).append(
            ObjectInstance(iid, img_id, cid, cats[cid], Rect(x, y, w, h), bool(crowd))
        )
    return DatasetIndex(images, {k: tuple(v) for k, v in per_image.items()}, cats)
