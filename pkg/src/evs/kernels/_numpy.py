"""NumPy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable or
disabled; signatures and results match `_native`.
"""

import numpy as np

from .._util import ceil_div


def patch_mean_abs_diff(frames: np.ndarray, patch: int, num_threads: int = 0) -> np.ndarray:
    """Mean absolute pixel difference per patch between consecutive frames.

    `frames` is (T, C, H, W), uint8 or float; returns (T-1, H', W') float64.
    Partial edge patches average over their available pixels only.
    `num_threads` is accepted for signature parity; this path is serial.
    """
    t, c, h, w = frames.shape
    gh, gw = ceil_div(h, patch), ceil_div(w, patch)
    row_starts = np.arange(0, h, patch)
    col_starts = np.arange(0, w, patch)
    cell_h = np.minimum(patch, h - row_starts)
    cell_w = np.minimum(patch, w - col_starts)
    counts = (cell_h[:, None] * cell_w[None, :] * c).astype(np.float64)
    out = np.empty((t - 1, gh, gw), dtype=np.float64)
    for i in range(t - 1):
        d = np.abs(frames[i + 1].astype(np.float64) - frames[i].astype(np.float64))
        s = np.add.reduceat(d, row_starts, axis=1)
        s = np.add.reduceat(s, col_starts, axis=2)
        out[i] = s.sum(axis=0) / counts
    return out


def cosine_dissimilarity(grid: np.ndarray, num_threads: int = 0) -> np.ndarray:
    """Per-site cosine dissimilarity between consecutive frames.

    `grid` is (T, H', W', C) float; returns (T-1, H', W') float64 in [0, 2].
    A zero-norm vector on either side yields similarity 0 (dissimilarity 1).
    """
    t = grid.shape[0]
    out = np.empty((t - 1,) + grid.shape[1:3], dtype=np.float64)
    for i in range(t - 1):
        a = grid[i].astype(np.float64)
        b = grid[i + 1].astype(np.float64)
        dot = np.einsum("hwc,hwc->hw", a, b)
        na = np.einsum("hwc,hwc->hw", a, a)
        nb = np.einsum("hwc,hwc->hw", b, b)
        sim = np.zeros_like(dot)
        ok = (na > 0.0) & (nb > 0.0)
        # sqrt of the product (not product of sqrts) so that identical and
        # antipodal vectors land exactly on 0 and 2
        sim[ok] = dot[ok] / np.sqrt(na[ok] * nb[ok])
        out[i] = np.clip(1.0 - sim, 0.0, 2.0)
    return out
