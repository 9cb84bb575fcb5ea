"""COCO-shaped synthetic annotation files for tests and benchmarks."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

# (id, name) of the 80 COCO 2017 detection categories
COCO_CATEGORIES = [
    (1, "person"), (2, "bicycle"), (3, "car"), (4, "motorcycle"), (5, "airplane"),
    (6, "bus"), (7, "train"), (8, "truck"), (9, "boat"), (10, "traffic light"),
    (11, "fire hydrant"), (13, "stop sign"), (14, "parking meter"), (15, "bench"),
    (16, "bird"), (17, "cat"), (18, "dog"), (19, "horse"), (20, "sheep"), (21, "cow"),
    (22, "elephant"), (23, "bear"), (24, "zebra"), (25, "giraffe"), (27, "backpack"),
    (28, "umbrella"), (31, "handbag"), (32, "tie"), (33, "suitcase"), (34, "frisbee"),
    (35, "skis"), (36, "snowboard"), (37, "sports ball"), (38, "kite"),
    (39, "baseball bat"), (40, "baseball glove"), (41, "skateboard"), (42, "surfboard"),
    (43, "tennis racket"), (44, "bottle"), (46, "wine glass"), (47, "cup"), (48, "fork"),
    (49, "knife"), (50, "spoon"), (51, "bowl"), (52, "banana"), (53, "apple"),
    (54, "sandwich"), (55, "orange"), (56, "broccoli"), (57, "carrot"), (58, "hot dog"),
    (59, "pizza"), (60, "donut"), (61, "cake"), (62, "chair"), (63, "couch"),
    (64, "potted plant"), (65, "bed"), (67, "dining table"), (70, "toilet"), (72, "tv"),
    (73, "laptop"), (74, "mouse"), (75, "remote"), (76, "keyboard"), (77, "cell phone"),
    (78, "microwave"), (79, "oven"), (80, "toaster"), (81, "sink"), (82, "refrigerator"),
    (84, "book"), (85, "clock"), (86, "vase"), (87, "scissors"), (88, "teddy bear"),
    (89, "hair drier"), (90, "toothbrush"),
]


def coco_category_names() -> list[str]:
    return [name for _, name in COCO_CATEGORIES]


def synthetic_coco(
    seed: int,
    n_images: int = 50,
    max_objects: int = 12,
    n_categories: int = 80,
    crowd_rate: float = 0.01,
    float_boxes: bool = True,
) -> dict:
    """Random COCO-format dict. Boxes may poke past the image and can be degenerate."""
    rng = np.random.default_rng(seed)
    cats = COCO_CATEGORIES[:n_categories]
    images, anns = [], []
    ann_id = 1
    for img_id in range(1, n_images + 1):
        w = int(rng.integers(64, 641))
        h = int(rng.integers(64, 641))
        images.append({"id": img_id, "width": w, "height": h, "file_name": f"{img_id:012d}.jpg"})
        for _ in range(int(rng.integers(0, max_objects + 1))):
            bw = float(rng.uniform(0, w * 0.8))
            bh = float(rng.uniform(0, h * 0.8))
            x = float(rng.uniform(-0.05 * w, w - bw * 0.9))
            y = float(rng.uniform(-0.05 * h, h - bh * 0.9))
            box = [x, y, bw, bh]
            if not float_boxes:
                box = [round(v) for v in box]
            anns.append(
                {
                    "id": ann_id,
                    "image_id": img_id,
                    "category_id": int(cats[int(rng.integers(len(cats)))][0]),
                    "bbox": [round(v, 2) for v in box],
                    "area": bw * bh,
                    "iscrowd": int(rng.random() < crowd_rate),
                    "segmentation": [[x, y, x + bw, y, x + bw, y + bh]],
                }
            )
            ann_id += 1
    order = rng.permutation(len(anns))
    return {
        "info": {"description": "synthetic"},
        "licenses": [],
        "images": images,
        "annotations": [anns[k] for k in order],
        "categories": [{"id": i, "name": n, "supercategory": "x"} for i, n in cats],
    }


def write_synthetic_coco(path: str | Path, seed: int, **kw) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(synthetic_coco(seed, **kw), fh)
    return path
