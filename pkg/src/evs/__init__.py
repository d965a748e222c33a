"""Retention-mask pruning of temporally static video tokens.

The package computes keep/drop masks over video token grids from pixel or
embedding differences, gathers the surviving tokens with either preserved
or renumbered position ids, provides budget-matched reduction baselines,
and evaluates an analytic latency/KV-cache cost model.
"""

from .baselines import BaselineConfig, matched_budget, merge_tokens, random_mask, subsample_mask
from .costmodel import (
    KVCacheSpec,
    LatencyTable,
    fit_ttft_model,
    kv_cache_memory,
    load_calibration,
    pruned_seq_len,
    speedup_report,
    total_attention_memory,
)
from .errors import (
    CorruptFileError,
    EvsError,
    InsufficientDataError,
    InvalidMaskError,
    InvalidStreamError,
    UnsupportedFormatError,
)
from .geometry import PatchGeometry, TokenSite, effective_patch_size, flat_index, site_from_flat
from .overlay import render_overlay
from .pruner import RetentionReport, gather_tokens, mask_disagreement, stream_stats
from .rates import BetaRateSpec, RateSampler, sample_rate
from .selector import (
    DiffField,
    PruningConfig,
    build_mask,
    build_mask_embedding,
    build_mask_rgb,
    compute_embedding_diffs,
    compute_rgb_diffs,
    percentile_threshold,
)
from .tensorio import (
    EmbeddingGrid,
    RetentionMask,
    TokenStream,
    VideoClip,
    read_clip,
    read_embeddings,
    read_image_dir,
    read_mask,
    read_tokens,
    write_clip,
    write_embeddings,
    write_mask,
    write_tokens,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig", "BetaRateSpec", "CorruptFileError", "DiffField",
    "EmbeddingGrid", "EvsError", "InsufficientDataError", "InvalidMaskError",
    "InvalidStreamError", "KVCacheSpec", "LatencyTable", "PatchGeometry",
    "PruningConfig", "RateSampler", "RetentionMask", "RetentionReport",
    "TokenSite", "TokenStream", "UnsupportedFormatError", "VideoClip",
    "build_mask", "build_mask_embedding", "build_mask_rgb",
    "compute_embedding_diffs", "compute_rgb_diffs", "effective_patch_size",
    "fit_ttft_model", "flat_index", "gather_tokens", "kv_cache_memory",
    "load_calibration", "mask_disagreement", "matched_budget", "merge_tokens",
    "percentile_threshold", "pruned_seq_len", "random_mask", "read_clip",
    "read_embeddings", "read_image_dir", "read_mask", "read_tokens",
    "render_overlay", "sample_rate", "site_from_flat", "speedup_report",
    "stream_stats", "subsample_mask", "total_attention_memory", "write_clip",
    "write_embeddings", "write_mask", "write_tokens",
]
