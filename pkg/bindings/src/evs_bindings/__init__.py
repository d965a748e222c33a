"""In-process boundary for host inference pipelines.

Two entry points cover the serving hot path: :func:`build_mask` computes a
retention mask from a caller-provided pixel or feature buffer, and
:func:`gather` packs the retained feature vectors with their position ids.
Buffers must be dense row-major; anything exposing the buffer protocol with
a shape (NumPy arrays, memoryviews) is accepted, is never copied for
validation, and is not retained after the call returns. Outputs are fresh
arrays owned by the caller.

Violations raise :class:`BindingError` carrying a stable ``code`` so callers
can branch without parsing messages; no input crashes the process.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from evs.errors import EvsError
from evs.geometry import PatchGeometry
from evs.pruner import gather_tokens
from evs.selector import PruningConfig, build_mask_embedding, build_mask_rgb
from evs.tensorio import EmbeddingGrid, RetentionMask, VideoClip

__all__ = ["BindingError", "BuiltMask", "GatheredTokens", "build_mask", "gather"]

__version__ = "0.1.0"


class BindingError(Exception):
    """Structured boundary error; ``code`` is one of
    layout, shape, dtype, argument, mask, validation."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class BuiltMask(NamedTuple):
    mask: np.ndarray  # dense bool, (T, H', W')
    retained: int


class GatheredTokens(NamedTuple):
    features: Optional[np.ndarray]  # (K, C) f32, None when no features given
    position_ids: np.ndarray  # (K,) int64


def _as_dense(buffer, name: str, allowed: tuple[np.dtype, ...], ndim: int) -> np.ndarray:
    try:
        array = np.asarray(buffer)
    except Exception as exc:
        raise BindingError("layout", f"{name}: not a readable buffer ({exc})") from exc
    if array.dtype == object:
        raise BindingError("dtype", f"{name}: not a numeric buffer")
    if array.ndim != ndim:
        raise BindingError("shape", f"{name}: expected {ndim} dimensions, got {array.ndim}")
    if array.dtype not in allowed:
        names = "/".join(np.dtype(d).name for d in allowed)
        raise BindingError("dtype", f"{name}: expected {names}, got {array.dtype.name}")
    if array.size and not array.flags.c_contiguous:
        raise BindingError("layout", f"{name}: buffer must be dense row-major")
    return array


def build_mask(data, *, selector: str, q: float, mode: str = "exact-budget",
               patch_size: Optional[int] = None, downsample: int = 1) -> BuiltMask:
    """Retention mask over a pixel buffer (selector="rgb", shape (T, 3, H, W),
    u8 or f32) or a feature buffer (selector="embedding", shape (T, H', W', C),
    f32). Returns the dense boolean mask and the retained count."""
    if selector not in ("rgb", "embedding"):
        raise BindingError("argument", f"unknown selector {selector!r}")
    try:
        config = PruningConfig(q, mode, selector)
    except ValueError as exc:
        raise BindingError("argument", str(exc)) from exc
    try:
        if selector == "rgb":
            pixels = _as_dense(data, "pixels", (np.dtype(np.uint8), np.dtype(np.float32)), 4)
            if patch_size is None:
                raise BindingError("argument", "patch_size is required for the rgb selector")
            clip = VideoClip(pixels)
            geometry = PatchGeometry(clip.width, clip.height, patch_size, downsample)
            result = build_mask_rgb(clip, geometry, config)
        else:
            features = _as_dense(data, "features", (np.dtype(np.float32),), 4)
            result = build_mask_embedding(EmbeddingGrid(features), config)
    except BindingError:
        raise
    except (EvsError, ValueError) as exc:
        raise BindingError("validation", str(exc)) from exc
    bits = result.bits.copy()
    return BuiltMask(bits, int(bits.sum()))


def gather(features, mask, mode: str) -> GatheredTokens:
    """Pack retained feature vectors and position ids.

    ``features`` is a dense (T, H', W', C) f32 buffer or None for a
    positions-only gather; ``mask`` is a dense (T, H', W') boolean buffer;
    ``mode`` is "preserving" or "sequential".
    """
    bits = _as_dense(mask, "mask", (np.dtype(np.bool_),), 3)
    grid = None
    if features is not None:
        grid_data = _as_dense(features, "features", (np.dtype(np.float32),), 4)
        try:
            grid = EmbeddingGrid(grid_data)
        except ValueError as exc:
            raise BindingError("validation", str(exc)) from exc
    try:
        retention = RetentionMask(bits, 0.0, "embedding")
    except EvsError as exc:
        raise BindingError("mask", str(exc)) from exc
    except ValueError as exc:
        raise BindingError("shape", str(exc)) from exc
    try:
        stream = gather_tokens(grid, retention, mode)
    except (EvsError, ValueError) as exc:
        raise BindingError("validation", str(exc)) from exc
    payloads = None if stream.payloads is None else stream.payloads.copy()
    return GatheredTokens(payloads, stream.position_ids.copy())
