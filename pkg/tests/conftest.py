from __future__ import annotations

import random

import pytest
from PIL import Image

from socketgeo.kb import default_kb
from socketgeo.vision_eval import BBox


@pytest.fixture(scope="session")
def kb():
    return default_kb()


@pytest.fixture
def make_image():
    def _make(width=64, height=48, color=(120, 90, 60), seed=None):
        img = Image.new("RGB", (width, height), color)
        if seed is not None:
            rng = random.Random(seed)
            px = img.load()
            for _ in range(width * height // 4):
                x, y = rng.randrange(width), rng.randrange(height)
                px[x, y] = (rng.randrange(256), rng.randrange(256), rng.randrange(256))
        return img

    return _make


def random_box(rng: random.Random, span: float = 100.0) -> BBox:
    x0 = rng.uniform(0, span)
    y0 = rng.uniform(0, span)
    return BBox(x0, y0, x0 + rng.uniform(0.5, span / 2), y0 + rng.uniform(0.5, span / 2))
