"""Apply a retention mask to embeddings and assign position ids.

Two position conventions:

* ``preserving``: each kept token carries the flat index it had in the
  unpruned grid, so downstream consumers see the original spatial and
  temporal location.
* ``sequential``: kept tokens are renumbered 0..K-1.

The retained sites are identical across modes; only the ids differ.
Integer ids are all this module assigns; positional-embedding arithmetic
belongs to the host pipeline, which can continue numbering text tokens
after ``source_token_count`` (preserving) or ``count`` (sequential).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensorio import POSITION_MODES, EmbeddingGrid, RetentionMask, TokenStream


@dataclass(frozen=True)
class RetentionReport:
    total_sites: int
    retained: int
    retained_fraction: float
    per_frame: tuple[int, ...]


def gather_tokens(grid: Optional[EmbeddingGrid], mask: RetentionMask,
                  mode: str) -> TokenStream:
    """Collect the kept sites (and their payloads, when a grid is given).

    Pass ``grid=None`` for mask-only workflows; entries then carry no
    payload.
    """
    if mode not in POSITION_MODES:
        raise ValueError(f"unknown position mode {mode!r}")
    shape = mask.bits.shape
    if grid is not None and grid.data.shape[:3] != shape:
        raise ValueError(
            f"mask shape {shape} does not match embedding grid {grid.data.shape[:3]}"
        )
    flat = np.flatnonzero(mask.bits.reshape(-1)).astype(np.int64)
    t, rest = np.divmod(flat, mask.grid_height * mask.grid_width)
    y, x = np.divmod(rest, mask.grid_width)
    sites = np.stack([t, y, x], axis=1)
    ids = flat if mode == "preserving" else np.arange(len(flat), dtype=np.int64)
    payloads = None
    if grid is not None:
        payloads = grid.data.reshape(-1, grid.channels)[flat].copy()
    return TokenStream(
        position_ids=ids,
        sites=sites,
        payloads=payloads,
        position_mode=mode,
        frames=mask.frames,
        grid_height=mask.grid_height,
        grid_width=mask.grid_width,
    )


def stream_stats(mask: RetentionMask) -> RetentionReport:
    """Retention counts for a mask: total, fraction, and per-frame."""
    per_frame = mask.bits.reshape(mask.frames, -1).sum(axis=1)
    retained = int(per_frame.sum())
    return RetentionReport(
        total_sites=mask.site_count,
        retained=retained,
        retained_fraction=retained / mask.site_count,
        per_frame=tuple(int(n) for n in per_frame),
    )


def mask_disagreement(a: RetentionMask, b: RetentionMask) -> int:
    """Number of sites where two masks differ."""
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    return int(np.logical_xor(a.bits, b.bits).sum())
