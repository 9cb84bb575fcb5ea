import json

import numpy as np
import pytest

from spatialcurate.geometry import Rect
from spatialcurate.ingest import ImageRecord, ObjectInstance


def raster(r: Rect, size: int) -> np.ndarray:
    """Pixel mask of a rect; pixel (i, j) covers [i, i+1) x [j, j+1)."""
    m = np.zeros((size, size), dtype=bool)
    m[r.y : r.y + r.h, r.x : r.x + r.w] = True
    return m


def obj(iid, cat, box, image_id=1, name=None):
    return ObjectInstance(iid, image_id, cat, name or f"c{cat}", Rect(*box))


@pytest.fixture
def img100():
    return ImageRecord(1, 100, 100, "000000000001.jpg")


@pytest.fixture
def write_json(tmp_path):
    def _write(doc, name="ann.json"):
        p = tmp_path / name
        p.write_text(json.dumps(doc), encoding="utf-8")
        return p

    return _write


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import SUMMARY
    except ImportError:
        return
    if SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in SUMMARY:
            terminalreporter.write_line(line)
