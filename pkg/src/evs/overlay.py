"""Render retention masks over their source frames.

Pruned patches are darkened in place, so a frame sequence shows at a
glance which regions survived selection.
"""

from __future__ import annotations

import numpy as np

from ._util import ceil_div
from .tensorio import RetentionMask, VideoClip

DEFAULT_DARKEN = 0.25


def render_overlay(clip: VideoClip, mask: RetentionMask, effective_patch: int,
                   darken: float = DEFAULT_DARKEN) -> np.ndarray:
    """Frames with pruned patches scaled by ``darken``; returns (T, 3, H, W) u8.

    Fully retained frames come back pixel-identical to uint8 input.
    """
    if not 0.0 <= darken <= 1.0:
        raise ValueError(f"darken must be in [0, 1], got {darken}")
    if mask.frames != clip.frames:
        raise ValueError(f"mask has {mask.frames} frames, clip has {clip.frames}")
    gh = ceil_div(clip.height, effective_patch)
    gw = ceil_div(clip.width, effective_patch)
    if (gh, gw) != (mask.grid_height, mask.grid_width):
        raise ValueError(
            f"patch size {effective_patch} maps the clip to a {gh}x{gw} grid, "
            f"but the mask is {mask.grid_height}x{mask.grid_width}"
        )
    if clip.data.dtype == np.uint8:
        frames = clip.data.copy()
    else:
        frames = np.floor(np.clip(clip.data, 0.0, 255.0) + 0.5).astype(np.uint8)
    for t, y, x in np.argwhere(~mask.bits):
        y0, x0 = y * effective_patch, x * effective_patch
        block = frames[t, :, y0:y0 + effective_patch, x0:x0 + effective_patch]
        frames[t, :, y0:y0 + effective_patch, x0:x0 + effective_patch] = \
            np.floor(block * darken + 0.5).astype(np.uint8)
    return frames
