"""Command-line interface.

Subcommands map onto the library modules: ``mask`` runs a selector over a
clip or embedding file, ``prune`` gathers retained tokens, ``compare``
runs the selector against the baselines at a matched budget, ``cost``
evaluates the latency/KV-cache model, ``sample-rate`` draws stochastic
pruning rates, ``stats`` summarizes a mask, and ``viz`` renders overlay
frames with pruned patches darkened.

All randomness flows through an explicit ``--seed`` (default 0). Output
files are written atomically. The environment variable ``EVS_THREADS``
caps internal parallelism (0 = auto).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines, costmodel, overlay, pruner, rates, selector, tensorio
from .errors import EvsError
from .geometry import PatchGeometry


class UsageError(Exception):
    """Bad flag combination; exits with status 2 like a parse failure."""


def _positions_mode(flag: str) -> str:
    return "preserving" if flag == "preserve" else "sequential"


def _print_mask_stats(mask: tensorio.RetentionMask) -> None:
    report = pruner.stream_stats(mask)
    print(f"retained {report.retained} of {report.total_sites} tokens "
          f"(fraction {report.retained_fraction:.6f})")
    print("per-frame retained: " + " ".join(str(n) for n in report.per_frame))


# ---------------------------------------------------------------------------
# mask


def _load_clip_or_embeddings(path: Path, expect: Optional[str] = None):
    """Returns ("clip", VideoClip) or ("embedding", EmbeddingGrid)."""
    if path.is_dir():
        return "clip", tensorio.read_image_dir(path)
    kind = tensorio.peek_kind(path)
    if kind == "clip":
        return "clip", tensorio.read_clip(path)
    if kind == "embedding":
        return "embedding", tensorio.read_embeddings(path)
    raise UsageError(f"{path}: kind {kind!r} is not a selector input"
                     if expect is None else
                     f"{path}: expected a {expect} file, found kind {kind!r}")


def cmd_mask(args: argparse.Namespace) -> int:
    kind, value = _load_clip_or_embeddings(Path(args.input))
    if kind != ("clip" if args.selector == "rgb" else "embedding"):
        raise UsageError(
            f"selector {args.selector!r} cannot run on a {kind} input"
        )
    config = selector.PruningConfig(args.q, args.mode, args.selector)
    meta = {}
    if args.selector == "rgb":
        if args.patch_size is None:
            raise UsageError("--patch-size is required for the rgb selector")
        geometry = PatchGeometry(value.width, value.height, args.patch_size, args.downsample)
        mask = selector.build_mask_rgb(value, geometry, config)
        meta = {
            "effective_patch": geometry.effective_patch,
            "frame_height": value.height,
            "frame_width": value.width,
        }
    else:
        mask = selector.build_mask_embedding(value, config)
    mask = tensorio.RetentionMask(mask.bits, mask.pruning_rate_used, mask.selector_tag, meta)
    tensorio.write_mask(mask, args.out)
    _print_mask_stats(mask)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# prune


def cmd_prune(args: argparse.Namespace) -> int:
    mask = tensorio.read_mask(args.mask)
    grid = tensorio.read_embeddings(args.embeddings) if args.embeddings else None
    stream = pruner.gather_tokens(grid, mask, _positions_mode(args.positions))
    tensorio.write_tokens(stream, args.out)
    print(f"gathered {stream.count} of {stream.source_token_count} tokens "
          f"(positions {stream.position_mode})")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# compare


def _retained_flat(mask: tensorio.RetentionMask) -> np.ndarray:
    return np.flatnonzero(mask.bits.reshape(-1))


def cmd_compare(args: argparse.Namespace) -> int:
    clip = grid = None
    geometry = None
    if args.clip:
        _, clip = _load_clip_or_embeddings(Path(args.clip), expect="clip")
        if args.patch_size is None:
            raise UsageError("--patch-size is required when comparing from a clip")
        geometry = PatchGeometry(clip.width, clip.height, args.patch_size, args.downsample)
        frames, gh, gw = clip.frames, geometry.grid_height, geometry.grid_width
    if args.embeddings:
        grid = tensorio.read_embeddings(args.embeddings)
        if geometry is None:
            frames, gh, gw = grid.frames, grid.grid_height, grid.grid_width
        elif (clip.frames, geometry.grid_height, geometry.grid_width) != \
                (grid.frames, grid.grid_height, grid.grid_width):
            raise UsageError("clip geometry and embedding grid disagree in shape")
    if clip is None and grid is None:
        raise UsageError("compare needs --clip and/or --embeddings")

    methods = args.method or (["evs", "random", "subsample"] + (["merge"] if grid else []))
    if "merge" in methods and grid is None:
        raise UsageError("the merge baseline needs --embeddings")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    budget = baselines.matched_budget(gh * gw, frames, args.q)
    total = frames * gh * gw
    print(f"matched budget: {budget} of {total} tokens at q={args.q}")

    retained: dict[str, np.ndarray] = {}
    for method in methods:
        if method == "evs":
            config = selector.PruningConfig(args.q, "exact-budget")
            if clip is not None:
                mask = selector.build_mask_rgb(clip, geometry, config)
            else:
                mask = selector.build_mask_embedding(grid, config)
            out = out_dir / "evs.evsm"
            tensorio.write_mask(mask, out)
            retained[method] = _retained_flat(mask)
        elif method == "random":
            geo = geometry or PatchGeometry(gw, gh, 1)
            mask = baselines.random_mask(
                geo, frames, baselines.BaselineConfig("random", args.q, args.seed))
            out = out_dir / "random.evsm"
            tensorio.write_mask(mask, out)
            retained[method] = _retained_flat(mask)
        elif method == "subsample":
            geo = geometry or PatchGeometry(gw, gh, 1)
            mask = baselines.subsample_mask(geo, frames, args.q)
            out = out_dir / "subsample.evsm"
            tensorio.write_mask(mask, out)
            retained[method] = _retained_flat(mask)
            print("subsample kept frames: "
                  + " ".join(str(t) for t in baselines.kept_frames(mask)))
        elif method == "merge":
            stream = baselines.merge_tokens(grid, args.q, _positions_mode(args.positions))
            out = out_dir / "merge.tok"
            tensorio.write_tokens(stream, out)
            site_flat = (stream.sites[:, 0] * gh + stream.sites[:, 1]) * gw + stream.sites[:, 2]
            retained[method] = site_flat
        else:
            raise UsageError(f"unknown method {method!r}")
        count = len(retained[method])
        print(f"{method}: retained {count} (fraction {count / total:.6f}, "
              f"budget deviation {count - budget:+d})")
        print(f"wrote {out}")

    names = list(retained)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            sa, sb = set(retained[a].tolist()), set(retained[b].tolist())
            inter, union = len(sa & sb), len(sa | sb)
            jaccard = inter / union if union else 1.0
            print(f"overlap {a}/{b}: intersection {inter}, jaccard {jaccard:.4f}")
    return 0


# ---------------------------------------------------------------------------
# cost


def cmd_cost(args: argparse.Namespace) -> int:
    did_something = False
    if args.model:
        calibration = costmodel.load_calibration(args.calibration)
        if args.q:
            q_list = args.q
        else:
            table = calibration[args.model] if args.model in calibration else None
            if table is None:
                raise ValueError(f"unknown model tag {args.model!r}")
            q_list = sorted(set(table.pruning_rates.tolist()))
        report = costmodel.speedup_report(q_list, args.model, calibration)
        print(report.format_text())
        if args.csv:
            Path(args.csv).write_text(report.to_csv())
            print(f"wrote {args.csv}")
        did_something = True
    if args.seq_len is not None:
        spec = costmodel.KVCacheSpec(
            seq_len=args.seq_len,
            batch=args.batch,
            prefill_queue=args.queue,
            kv_dim_per_token=args.kv_dim,
            kv_elem_bytes=args.kv_bytes,
            weight_elem_bytes=args.w_bytes,
            model_dim=args.d_model,
            attn_params=args.attn_params,
            query_prefill_flag=args.query_prefill,
        )
        print(f"kv-cache memory: {costmodel.kv_cache_memory(spec):.6f} MiB")
        print(f"total attention memory: {costmodel.total_attention_memory(spec):.6f} MiB")
        did_something = True
    if not did_something:
        raise UsageError("cost needs --model (speedup report) and/or --seq-len (memory)")
    return 0


# ---------------------------------------------------------------------------
# sample-rate


def cmd_sample_rate(args: argparse.Namespace) -> int:
    spec = rates.BetaRateSpec(args.mode_target, args.concentration)
    n = int(float(args.n))
    sampler = rates.RateSampler(spec, args.seed)
    draws = sampler.sample_many(n)
    if n <= 1000:
        for value in draws:
            print(f"{value:.6f}")
    print(f"n={n} alpha={spec.alpha:.6f} beta={spec.beta:.6f} mean={draws.mean():.6f}")
    if n >= 100:
        counts, edges = np.histogram(draws, bins=100, range=(0.0, 1.0))
        center = (edges[np.argmax(counts)] + edges[np.argmax(counts) + 1]) / 2.0
        print(f"histogram-mode={center:.4f}")
    return 0


# ---------------------------------------------------------------------------
# stats / viz


def cmd_stats(args: argparse.Namespace) -> int:
    mask = tensorio.read_mask(args.mask)
    print(f"selector: {mask.selector_tag}")
    print(f"pruning-rate-used: {mask.pruning_rate_used}")
    print(f"grid: {mask.frames} frames x {mask.grid_height}x{mask.grid_width}")
    _print_mask_stats(mask)
    return 0


def cmd_viz(args: argparse.Namespace) -> int:
    _, clip = _load_clip_or_embeddings(Path(args.clip), expect="clip")
    mask = tensorio.read_mask(args.mask)
    if args.patch_size is not None:
        patch = args.patch_size * args.downsample
    elif "effective_patch" in mask.meta:
        patch = int(mask.meta["effective_patch"])
    else:
        raise UsageError("mask carries no patch size; pass --patch-size")
    frames = overlay.render_overlay(clip, mask, patch, args.darken)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(frames.shape[0]):
        tensorio.write_ppm(out_dir / f"frame_{t:05d}.ppm", frames[t])
    print(f"wrote {frames.shape[0]} overlay frames to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evs",
        description="Retention-mask pruning of temporally static video tokens.",
        epilog="EVS_THREADS caps internal parallelism (0 = auto).",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("mask", help="compute a retention mask from a clip or embeddings")
    p.add_argument("input", help=".tbin clip/embedding file, or a directory of PPM/PGM frames")
    p.add_argument("--selector", choices=("rgb", "embedding"), required=True)
    p.add_argument("--q", type=float, required=True, help="pruning rate in [0, 1)")
    p.add_argument("--mode", choices=selector.THRESHOLD_MODES, default="exact-budget")
    p.add_argument("--patch-size", type=int, help="encoder stem patch size in pixels (rgb)")
    p.add_argument("--downsample", type=int, default=1, help="projector downsampling factor")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("prune", help="gather retained tokens with position ids")
    p.add_argument("--embeddings", help="optional .tbin embedding file for payloads")
    p.add_argument("--mask", required=True)
    p.add_argument("--positions", choices=("preserve", "sequential"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("compare", help="run selector and baselines at a matched budget")
    p.add_argument("--method", action="append",
                   choices=("evs", "random", "subsample", "merge"),
                   help="repeatable; defaults to every applicable method")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--clip")
    p.add_argument("--embeddings")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--positions", choices=("preserve", "sequential"), default="preserve")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cost", help="latency speedup and KV-cache memory reports")
    p.add_argument("--model", help="calibrated model tag (7B or 14B)")
    p.add_argument("--q", type=float, action="append", help="repeatable pruning rate")
    p.add_argument("--calibration", help="override the embedded calibration file")
    p.add_argument("--csv", help="also write the speedup report as CSV")
    p.add_argument("--seq-len", type=int, help="sequence length for the memory report")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--queue", type=int, default=0, help="prefill queue size")
    p.add_argument("--kv-dim", type=int, default=0, help="KV dimension per token")
    p.add_argument("--kv-bytes", type=int, default=2, choices=(1, 2, 4, 8))
    p.add_argument("--w-bytes", type=int, default=2, choices=(1, 2, 4, 8))
    p.add_argument("--d-model", type=int, default=0)
    p.add_argument("--attn-params", type=int, default=0)
    p.add_argument("--query-prefill", type=int, default=0, choices=(0, 1))
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("sample-rate", help="draw stochastic pruning rates")
    p.add_argument("--mode-target", type=float, required=True)
    p.add_argument("--concentration", type=float, default=20.0)
    p.add_argument("--n", default="1", help="number of draws (accepts 1e6 style)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample_rate)

    p = sub.add_parser("stats", help="summarize a mask file")
    p.add_argument("--mask", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("viz", help="write overlay frames with pruned patches darkened")
    p.add_argument("--clip", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--darken", type=float, default=overlay.DEFAULT_DARKEN)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_viz)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (EvsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
