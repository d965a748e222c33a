import numpy as np
import pytest

from evs.tensorio import EmbeddingGrid, VideoClip


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_clip(rng, frames, height, width, dtype=np.uint8):
    if dtype == np.uint8:
        data = rng.integers(0, 256, size=(frames, 3, height, width), dtype=np.uint8)
    else:
        data = rng.random(size=(frames, 3, height, width), dtype=np.float32) * 255.0
    return VideoClip(data)


def make_grid(rng, frames, grid_h, grid_w, channels):
    data = rng.normal(size=(frames, grid_h, grid_w, channels)).astype(np.float32)
    return EmbeddingGrid(data)
