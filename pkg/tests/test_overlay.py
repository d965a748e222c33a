import numpy as np
import pytest

from evs.overlay import render_overlay
from evs.tensorio import RetentionMask, VideoClip

from conftest import make_clip


def test_all_ones_mask_is_pixel_identity(rng):
    clip = make_clip(rng, 2, 8, 8)
    mask = RetentionMask(np.ones((2, 2, 2), bool), 0.0, "rgb")
    frames = render_overlay(clip, mask, effective_patch=4)
    assert np.array_equal(frames, clip.data)


def test_pruned_patch_is_darkened(rng):
    clip = VideoClip(np.full((2, 3, 8, 8), 200, dtype=np.uint8))
    bits = np.ones((2, 2, 2), dtype=bool)
    bits[1, 0, 1] = False
    mask = RetentionMask(bits, 0.5, "rgb")
    frames = render_overlay(clip, mask, effective_patch=4, darken=0.25)
    assert np.all(frames[1, :, 0:4, 4:8] == 50)  # floor(200 * 0.25 + 0.5)
    assert np.all(frames[1, :, 0:4, 0:4] == 200)
    assert np.all(frames[0] == 200)


def test_float_clip_is_converted(rng):
    data = np.full((1, 3, 4, 4), 300.0, dtype=np.float32)  # clamped to 255
    mask = RetentionMask(np.ones((1, 1, 1), bool), 0.0, "rgb")
    frames = render_overlay(VideoClip(data), mask, effective_patch=4)
    assert frames.dtype == np.uint8
    assert np.all(frames == 255)


def test_partial_edge_patches_darken_cleanly(rng):
    clip = make_clip(rng, 2, 6, 10)  # patch 4 -> 2x3 grid with edge cells
    bits = np.ones((2, 2, 3), dtype=bool)
    bits[1] = False
    mask = RetentionMask(bits, 0.9, "rgb")
    frames = render_overlay(clip, mask, effective_patch=4)
    expected = np.floor(clip.data[1].astype(np.float64) * 0.25 + 0.5).astype(np.uint8)
    assert np.array_equal(frames[1], expected)


def test_geometry_mismatch_rejected(rng):
    clip = make_clip(rng, 2, 8, 8)
    mask = RetentionMask(np.ones((2, 3, 3), bool), 0.0, "rgb")
    with pytest.raises(ValueError):
        render_overlay(clip, mask, effective_patch=4)


def test_bad_darken_rejected(rng):
    clip = make_clip(rng, 1, 4, 4)
    mask = RetentionMask(np.ones((1, 1, 1), bool), 0.0, "rgb")
    with pytest.raises(ValueError):
        render_overlay(clip, mask, effective_patch=4, darken=1.5)
