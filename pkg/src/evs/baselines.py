"""Token-reduction baselines matched to the selector's retained budget.

All three methods target the same retained count as an exact-budget
selector mask at equal pruning rate, so comparisons isolate the selection
policy rather than the budget:

* random: frame 0 kept (parity with the selector's anchor), then a seeded
  uniform draw without replacement over the prunable sites.
* frame subsampling: whole frames at uniform stride, anchored at frame 0.
  Whole-frame granularity means its count can deviate from the budget by
  up to one frame's tokens; that deviation is reported, not hidden.
* token merging: a deterministic greedy bipartite loop in the spirit of
  similarity-based merging. Each round splits the surviving tokens
  alternately (by canonical order) into sets A and B, matches every A
  token to its most cosine-similar B token, and folds the highest-
  similarity pairs together until the target count is reached. Merged
  payloads are the arithmetic mean over all constituent source tokens,
  and the merged token keeps the earliest constituent site.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import ceil_fraction, round_half_up
from .geometry import PatchGeometry
from .tensorio import EmbeddingGrid, RetentionMask, TokenStream

BASELINE_METHODS = ("random", "subsample", "merge")


@dataclass(frozen=True)
class BaselineConfig:
    method: str
    pruning_rate: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in BASELINE_METHODS:
            raise ValueError(f"unknown baseline method {self.method!r}")
        if not 0.0 <= self.pruning_rate < 1.0:
            raise ValueError(f"pruning_rate must be in [0, 1), got {self.pruning_rate}")


def matched_budget(tokens_per_frame: int, frames: int, q: float) -> int:
    """Retained count of an exact-budget selector mask at rate q."""
    prunable = (frames - 1) * tokens_per_frame
    return tokens_per_frame + round_half_up((1.0 - q) * prunable)


def random_mask(geometry: PatchGeometry, frames: int, config: BaselineConfig) -> RetentionMask:
    """Frame 0 kept; a seeded uniform choice of prunable sites for the rest."""
    if config.method != "random":
        raise ValueError(f"config.method is {config.method!r}, expected 'random'")
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    per_frame = geometry.tokens_per_frame
    prunable = (frames - 1) * per_frame
    keep = round_half_up((1.0 - config.pruning_rate) * prunable)
    bits = np.zeros((frames, geometry.grid_height, geometry.grid_width), dtype=bool)
    bits[0] = True
    if prunable and keep:
        rng = np.random.default_rng(config.seed)
        chosen = rng.choice(prunable, size=keep, replace=False)
        flat = bits.reshape(-1)
        flat[per_frame + chosen] = True
    return RetentionMask(bits, config.pruning_rate, "random")


def subsample_mask(geometry: PatchGeometry, frames: int, q: float) -> RetentionMask:
    """Keep ceil((1-q)*T) whole frames at uniform stride, frame 0 included."""
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    if not 0.0 <= q < 1.0:
        raise ValueError(f"pruning_rate must be in [0, 1), got {q}")
    n_keep = max(1, ceil_fraction((1.0 - q) * frames))
    if n_keep == 1:
        kept = [0]
    else:
        step = (frames - 1) / (n_keep - 1)
        kept = [round_half_up(i * step) for i in range(n_keep)]
    bits = np.zeros((frames, geometry.grid_height, geometry.grid_width), dtype=bool)
    bits[kept] = True
    return RetentionMask(bits, q, "subsample")


def kept_frames(mask: RetentionMask) -> list[int]:
    """Frames with at least one retained site (all sites, for subsample masks)."""
    return [t for t in range(mask.frames) if mask.bits[t].any()]


def _normalized_rows(payloads: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", payloads, payloads))
    out = np.zeros_like(payloads)
    ok = norms > 0.0
    out[ok] = payloads[ok] / norms[ok, None]
    return out


def merge_tokens(grid: EmbeddingGrid, q: float, mode: str = "preserving",
                 target_count: int | None = None) -> TokenStream:
    """Greedy similarity merging down to the matched budget.

    ``target_count`` overrides the budget (it defaults to the exact-budget
    selector count at rate q). Deterministic: similarity ties are broken by
    ascending canonical order of the B token, then of the A token.
    """
    if not 0.0 <= q < 1.0:
        raise ValueError(f"pruning_rate must be in [0, 1), got {q}")
    t, gh, gw, c = grid.data.shape
    n = t * gh * gw
    if n < 2:
        raise ValueError("token merging needs at least 2 tokens")
    if target_count is None:
        target_count = matched_budget(gh * gw, t, q)
    if target_count < 1:
        raise ValueError(f"target count must be >= 1, got {target_count}")

    # Each surviving token tracks the summed payload (mass) and count of its
    # constituent source tokens; its payload is mass/size, so the weighted
    # total over all tokens is preserved by every merge. The label is the
    # earliest constituent's flat site index and stays unique.
    masses = grid.data.reshape(n, c).astype(np.float64)
    sizes = np.ones(n, dtype=np.float64)
    labels = np.arange(n, dtype=np.int64)

    count = n
    while count > int(target_count):
        a_pos = np.arange(0, count, 2)
        b_pos = np.arange(1, count, 2)
        r = min(len(a_pos), count - int(target_count))
        payloads = masses / sizes[:, None]
        normed = _normalized_rows(payloads)
        sim = normed[a_pos] @ normed[b_pos].T
        best_b = np.argmax(sim, axis=1)  # first max: lowest B label wins ties
        best_s = sim[np.arange(len(a_pos)), best_b]
        order = np.lexsort((labels[a_pos], labels[b_pos[best_b]], -best_s))
        chosen_a = a_pos[order[:r]]
        chosen_b = b_pos[best_b[order[:r]]]
        np.add.at(masses, chosen_b, masses[chosen_a])
        np.add.at(sizes, chosen_b, sizes[chosen_a])
        np.minimum.at(labels, chosen_b, labels[chosen_a])
        keep = np.ones(count, dtype=bool)
        keep[chosen_a] = False
        masses, sizes, labels = masses[keep], sizes[keep], labels[keep]
        resort = np.argsort(labels, kind="stable")
        masses, sizes, labels = masses[resort], sizes[resort], labels[resort]
        count -= r

    flat = labels
    tt, rest = np.divmod(flat, gh * gw)
    yy, xx = np.divmod(rest, gw)
    ids = flat if mode == "preserving" else np.arange(count, dtype=np.int64)
    return TokenStream(
        position_ids=ids,
        sites=np.stack([tt, yy, xx], axis=1),
        payloads=(masses / sizes[:, None]).astype(np.float32),
        position_mode=mode,
        frames=t,
        grid_height=gh,
        grid_width=gw,
    )
