"""Retention-mask selection from frame-to-frame change.

Two interchangeable change measures feed one mask-assembly path:

* RGB: mean absolute pixel difference per patch between consecutive
  frames, computed on raw pixel values (uint8 promoted to real before
  differencing, no color transform).
* Embedding: cosine dissimilarity of the per-site feature vectors of
  consecutive frames, clamped to [0, 2].

The mask keeps every site of frame 0 as the temporal anchor. For the
remaining (prunable) sites, two modes are offered:

* ``threshold``: keep sites whose difference is >= the q-th percentile of
  all differences pooled over the whole sequence (nearest-rank, no
  interpolation). On a constant input every difference ties at the cutoff
  and everything is kept; that degenerate behavior is intentional.
* ``exact-budget`` (default): keep exactly round((1-q) * prunable_count)
  sites with the largest differences, ties broken by ascending canonical
  order, so the advertised token count is always hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._util import round_half_up
from .geometry import PatchGeometry
from .tensorio import EmbeddingGrid, RetentionMask, VideoClip

THRESHOLD_MODES = ("threshold", "exact-budget")
SELECTORS = ("rgb", "embedding")


@dataclass(frozen=True)
class DiffField:
    """Per-site change scores, shape (T-1, H', W'), non-negative float64.

    Row i holds the differences between frames i and i+1.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 3:
            raise ValueError(f"diff field must have shape (T-1, H', W'), got {v.shape}")
        if v.shape[1] < 1 or v.shape[2] < 1:
            raise ValueError(f"diff field grid must be non-empty, got {v.shape}")
        if v.dtype != np.float64:
            object.__setattr__(self, "values", v.astype(np.float64))
            v = self.values
        if v.size and (not np.isfinite(v).all() or (v < 0).any()):
            raise ValueError("diff values must be finite and non-negative")

    @property
    def pair_count(self) -> int:
        return self.values.shape[0]

    @property
    def clip_frames(self) -> int:
        return self.values.shape[0] + 1

    @property
    def grid_height(self) -> int:
        return self.values.shape[1]

    @property
    def grid_width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class PruningConfig:
    pruning_rate: float
    threshold_mode: str = "exact-budget"
    selector: str = "rgb"

    def __post_init__(self) -> None:
        if not 0.0 <= self.pruning_rate < 1.0:
            raise ValueError(f"pruning_rate must be in [0, 1), got {self.pruning_rate}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.selector not in SELECTORS:
            raise ValueError(f"unknown selector {self.selector!r}")


def compute_rgb_diffs(clip: VideoClip, geometry: PatchGeometry) -> DiffField:
    """Patch-level mean absolute pixel difference between consecutive frames.

    A single-frame clip yields an empty field (zero pairs).
    """
    if clip.height != geometry.frame_height or clip.width != geometry.frame_width:
        raise ValueError(
            f"clip is {clip.width}x{clip.height} but geometry declares "
            f"{geometry.frame_width}x{geometry.frame_height}"
        )
    if clip.frames == 1:
        empty = np.zeros((0, geometry.grid_height, geometry.grid_width), dtype=np.float64)
        return DiffField(empty)
    values = kernels.patch_mean_abs_diff(clip.data, geometry.effective_patch)
    return DiffField(values)


def compute_embedding_diffs(grid: EmbeddingGrid) -> DiffField:
    """Per-site cosine dissimilarity between consecutive frames, in [0, 2]."""
    if grid.frames == 1:
        empty = np.zeros((0, grid.grid_height, grid.grid_width), dtype=np.float64)
        return DiffField(empty)
    return DiffField(kernels.cosine_dissimilarity(grid.data))


def percentile_threshold(diffs: DiffField, q: float) -> float:
    """Nearest-rank q-quantile of all diff values pooled across the sequence.

    Sort ascending and return the element at index ceil(q*N) - 1 (index 0
    for q = 0). No interpolation, so the threshold is always an observed
    value and ties reproduce exactly.
    """
    if diffs.values.size == 0:
        raise ValueError("cannot take a percentile of an empty diff field")
    if not 0.0 <= q < 1.0:
        raise ValueError(f"q must be in [0, 1), got {q}")
    pooled = np.sort(diffs.values, axis=None)
    rank = max(math.ceil(q * pooled.size) - 1, 0)
    return float(pooled[rank])


def build_mask(diffs: DiffField, config: PruningConfig) -> RetentionMask:
    """Assemble a retention mask from a diff field.

    Frame 0 is always fully kept. See the module docstring for the two
    threshold modes.
    """
    t = diffs.clip_frames
    gh, gw = diffs.grid_height, diffs.grid_width
    bits = np.zeros((t, gh, gw), dtype=bool)
    bits[0] = True
    prunable = diffs.values.size
    if prunable:
        if config.threshold_mode == "threshold":
            cutoff = percentile_threshold(diffs, config.pruning_rate)
            bits[1:] = diffs.values >= cutoff
        else:
            keep = max(0, round_half_up((1.0 - config.pruning_rate) * prunable))
            flat = diffs.values.reshape(-1)
            # stable sort on the negated values: largest first, ties by
            # ascending canonical order
            order = np.argsort(-flat, kind="stable")
            kept = np.zeros(prunable, dtype=bool)
            kept[order[:keep]] = True
            bits[1:] = kept.reshape(diffs.values.shape)
    return RetentionMask(bits, config.pruning_rate, config.selector)


def build_mask_rgb(clip: VideoClip, geometry: PatchGeometry,
                   config: PruningConfig) -> RetentionMask:
    if config.selector != "rgb":
        config = PruningConfig(config.pruning_rate, config.threshold_mode, "rgb")
    return build_mask(compute_rgb_diffs(clip, geometry), config)


def build_mask_embedding(grid: EmbeddingGrid, config: PruningConfig) -> RetentionMask:
    if config.selector != "embedding":
        config = PruningConfig(config.pruning_rate, config.threshold_mode, "embedding")
    return build_mask(compute_embedding_diffs(grid), config)
