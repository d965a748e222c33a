import numpy as np
import pytest

from evs import baselines, pruner, selector, tensorio
from evs.cli import main
from evs.geometry import PatchGeometry

from conftest import make_clip, make_grid


def write_inputs(tmp_path, rng, frames=4, height=16, width=16, channels=6):
    clip = make_clip(rng, frames, height, width)
    grid = make_grid(rng, frames, height // 4, width // 4, channels)
    clip_path = tmp_path / "clip.tbin"
    grid_path = tmp_path / "emb.tbin"
    tensorio.write_clip(clip, clip_path)
    tensorio.write_embeddings(grid, grid_path)
    return clip, grid, clip_path, grid_path


# ---------------------------------------------------------------------------
# mask


def test_mask_rgb_prints_budget_fraction(tmp_path, capsys):
    clip = tensorio.VideoClip(np.full((4, 3, 16, 16), 9, dtype=np.uint8))
    clip_path = tmp_path / "clip.tbin"
    tensorio.write_clip(clip, clip_path)
    out = tmp_path / "mask.evsm"
    code = main(["mask", str(clip_path), "--selector", "rgb", "--q", "0.75",
                 "--patch-size", "4", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    # 16 anchored + round(0.25 * 48) = 28 of 64
    assert "retained 28 of 64 tokens" in printed
    assert f"fraction {28 / 64:.6f}" in printed
    mask = tensorio.read_mask(out)
    assert mask.selector_tag == "rgb"
    assert mask.meta["effective_patch"] == 4


def test_mask_q_zero_fraction_one(tmp_path, rng, capsys):
    _, _, clip_path, _ = write_inputs(tmp_path, rng)
    out = tmp_path / "mask.evsm"
    assert main(["mask", str(clip_path), "--selector", "rgb", "--q", "0",
                 "--patch-size", "4", "--out", str(out)]) == 0
    assert "fraction 1.000000" in capsys.readouterr().out


def test_mask_embedding_selector(tmp_path, rng, capsys):
    _, grid, _, grid_path = write_inputs(tmp_path, rng)
    out = tmp_path / "mask.evsm"
    assert main(["mask", str(grid_path), "--selector", "embedding", "--q", "0.5",
                 "--out", str(out)]) == 0
    expected = selector.build_mask_embedding(grid, selector.PruningConfig(0.5))
    assert np.array_equal(tensorio.read_mask(out).bits, expected.bits)


def test_mask_selector_input_mismatch_is_usage_error(tmp_path, rng, capsys):
    _, _, clip_path, grid_path = write_inputs(tmp_path, rng)
    out = tmp_path / "mask.evsm"
    assert main(["mask", str(clip_path), "--selector", "embedding", "--q", "0.5",
                 "--out", str(out)]) == 2
    assert main(["mask", str(grid_path), "--selector", "rgb", "--q", "0.5",
                 "--patch-size", "4", "--out", str(out)]) == 2
    assert not out.exists()


def test_mask_rgb_requires_patch_size(tmp_path, rng):
    _, _, clip_path, _ = write_inputs(tmp_path, rng)
    assert main(["mask", str(clip_path), "--selector", "rgb", "--q", "0.5",
                 "--out", str(tmp_path / "m.evsm")]) == 2


def test_mask_rgb_vs_embedding_disagreement_oracle(tmp_path, rng, capsys):
    _, grid, clip_path, grid_path = write_inputs(tmp_path, rng)
    rgb_out, emb_out = tmp_path / "rgb.evsm", tmp_path / "emb.evsm"
    assert main(["mask", str(clip_path), "--selector", "rgb", "--q", "0.75",
                 "--patch-size", "4", "--out", str(rgb_out)]) == 0
    assert main(["mask", str(grid_path), "--selector", "embedding", "--q", "0.75",
                 "--out", str(emb_out)]) == 0
    a, b = tensorio.read_mask(rgb_out), tensorio.read_mask(emb_out)
    assert pruner.mask_disagreement(a, b) == int((a.bits != b.bits).sum())


def test_mask_from_image_directory(tmp_path, rng, capsys):
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    for i in range(3):
        tensorio.write_ppm(frames_dir / f"{i:02d}.ppm",
                           rng.integers(0, 256, (3, 8, 8), dtype=np.uint8))
    out = tmp_path / "mask.evsm"
    assert main(["mask", str(frames_dir), "--selector", "rgb", "--q", "0.5",
                 "--patch-size", "4", "--out", str(out)]) == 0
    assert tensorio.read_mask(out).frames == 3


def test_unknown_flag_rejected(tmp_path, rng):
    with pytest.raises(SystemExit) as err:
        main(["mask", "x", "--selector", "rgb", "--q", "0.5", "--nope", "1"])
    assert err.value.code == 2


# ---------------------------------------------------------------------------
# prune and pipe composition


def test_mask_then_prune_matches_library_composition(tmp_path, rng):
    _, grid, _, grid_path = write_inputs(tmp_path, rng)
    mask_path = tmp_path / "mask.evsm"
    tok_path = tmp_path / "tokens.tok"
    assert main(["mask", str(grid_path), "--selector", "embedding", "--q", "0.75",
                 "--out", str(mask_path)]) == 0
    assert main(["prune", "--embeddings", str(grid_path), "--mask", str(mask_path),
                 "--positions", "preserve", "--out", str(tok_path)]) == 0

    mask = selector.build_mask_embedding(grid, selector.PruningConfig(0.75))
    stream = pruner.gather_tokens(grid, mask, "preserving")
    lib_path = tmp_path / "lib.tok"
    tensorio.write_tokens(stream, lib_path)
    assert tok_path.read_bytes() == lib_path.read_bytes()


def test_prune_sequential_positions(tmp_path, rng, capsys):
    _, grid, _, grid_path = write_inputs(tmp_path, rng)
    mask_path = tmp_path / "mask.evsm"
    tok_path = tmp_path / "t.tok"
    main(["mask", str(grid_path), "--selector", "embedding", "--q", "0.5",
          "--out", str(mask_path)])
    assert main(["prune", "--mask", str(mask_path), "--positions", "sequential",
                 "--out", str(tok_path)]) == 0
    stream = tensorio.read_tokens(tok_path)
    assert stream.position_mode == "sequential"
    assert stream.payloads is None
    assert np.array_equal(stream.position_ids, np.arange(stream.count))


def test_prune_shape_mismatch_fails(tmp_path, rng):
    _, _, _, grid_path = write_inputs(tmp_path, rng)
    other = make_grid(np.random.default_rng(0), 2, 2, 2, 3)
    mask_path = tmp_path / "m.evsm"
    tensorio.write_mask(
        tensorio.RetentionMask(np.ones((2, 2, 2), bool), 0.0, "embedding"), mask_path)
    assert main(["prune", "--embeddings", str(grid_path), "--mask", str(mask_path),
                 "--positions", "preserve", "--out", str(tmp_path / "t.tok")]) == 1


# ---------------------------------------------------------------------------
# compare


def test_compare_all_methods_budget_parity(tmp_path, rng, capsys):
    clip, grid, clip_path, grid_path = write_inputs(tmp_path, rng, frames=8)
    out_dir = tmp_path / "cmp"
    assert main(["compare", "--q", "0.75", "--clip", str(clip_path),
                 "--embeddings", str(grid_path), "--patch-size", "4",
                 "--out-dir", str(out_dir)]) == 0
    printed = capsys.readouterr().out
    budget = baselines.matched_budget(16, 8, 0.75)
    total = 8 * 16
    for name in ("evs", "random", "subsample"):
        assert (out_dir / f"{name}.evsm").exists()
    assert (out_dir / "merge.tok").exists()
    for method in ("evs", "random", "merge"):
        kept = int(tensorio.read_mask(out_dir / f"{method}.evsm").bits.sum()) \
            if method != "merge" else tensorio.read_tokens(out_dir / "merge.tok").count
        assert kept == budget
    sub_kept = int(tensorio.read_mask(out_dir / "subsample.evsm").bits.sum())
    assert abs(sub_kept - budget) <= 16  # one frame's tokens
    # every retained fraction within one frame's tokens of (1 - q)
    for line in printed.splitlines():
        if line.startswith(("evs:", "random:", "subsample:", "merge:")):
            frac = float(line.split("fraction ")[1].split(",")[0])
            assert abs(frac - 0.25) <= 16 / total
    assert "overlap evs/random" in printed


def test_compare_subsample_lists_kept_frames(tmp_path, rng, capsys):
    clip = make_clip(rng, 32, 8, 8)
    clip_path = tmp_path / "clip.tbin"
    tensorio.write_clip(clip, clip_path)
    assert main(["compare", "--q", "0.75", "--clip", str(clip_path),
                 "--patch-size", "4", "--method", "subsample",
                 "--out-dir", str(tmp_path / "cmp")]) == 0
    printed = capsys.readouterr().out
    assert "subsample kept frames: 0 4 9 13 18 22 27 31" in printed


def test_compare_merge_without_embeddings_is_usage_error(tmp_path, rng, capsys):
    _, _, clip_path, _ = write_inputs(tmp_path, rng)
    assert main(["compare", "--q", "0.75", "--clip", str(clip_path),
                 "--patch-size", "4", "--method", "merge",
                 "--out-dir", str(tmp_path / "cmp")]) == 2


def test_compare_retains_moving_patch(tmp_path, rng, capsys):
    # one patch changes between frames; the selector always keeps it
    base = np.full((3, 16, 16), 100, dtype=np.uint8)
    moved = base.copy()
    moved[:, 4:8, 8:12] += 80
    clip = tensorio.VideoClip(np.stack([base, moved, moved, moved, moved]))
    clip_path = tmp_path / "clip.tbin"
    tensorio.write_clip(clip, clip_path)
    out_dir = tmp_path / "cmp"
    assert main(["compare", "--q", "0.75", "--clip", str(clip_path),
                 "--patch-size", "4", "--method", "evs",
                 "--out-dir", str(out_dir)]) == 0
    mask = tensorio.read_mask(out_dir / "evs.evsm")
    assert bool(mask.bits[1, 1, 2])  # the moving site survives


# ---------------------------------------------------------------------------
# cost


def test_cost_speedup_report(tmp_path, capsys):
    assert main(["cost", "--model", "7B", "--q", "0.75"]) == 0
    assert "3.925x" in capsys.readouterr().out


def test_cost_csv_output(tmp_path, capsys):
    csv_path = tmp_path / "speedups.csv"
    assert main(["cost", "--model", "14B", "--q", "0.8", "--csv", str(csv_path)]) == 0
    assert csv_path.exists()
    assert "2.451" in csv_path.read_text()


def test_cost_kv_memory(capsys):
    assert main(["cost", "--seq-len", str(2**20), "--batch", "1", "--kv-dim", "1",
                 "--kv-bytes", "1"]) == 0
    out = capsys.readouterr().out
    assert "kv-cache memory: 1.000000 MiB" in out


def test_cost_without_action_is_usage_error(capsys):
    assert main(["cost"]) == 2


def test_cost_unknown_model(capsys):
    assert main(["cost", "--model", "3B"]) == 1


# ---------------------------------------------------------------------------
# sample-rate


def test_sample_rate_prints_draws_and_summary(capsys):
    assert main(["sample-rate", "--mode-target", "0.75", "--n", "5", "--seed", "3"]) == 0
    out1 = capsys.readouterr().out
    lines = [l for l in out1.splitlines() if l and not l.startswith(("n=", "histogram"))]
    assert len(lines) == 5
    for line in lines:
        assert 0.0 < float(line) < 1.0
    assert main(["sample-rate", "--mode-target", "0.75", "--n", "5", "--seed", "3"]) == 0
    assert capsys.readouterr().out == out1  # seeded determinism


def test_sample_rate_histogram_mode(capsys):
    assert main(["sample-rate", "--mode-target", "0.75", "--concentration", "20",
                 "--n", "1e5", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    mode_line = [l for l in out.splitlines() if l.startswith("histogram-mode=")][0]
    assert abs(float(mode_line.split("=")[1]) - 0.75) <= 0.02


def test_sample_rate_bad_concentration(capsys):
    assert main(["sample-rate", "--mode-target", "0.75", "--concentration", "2"]) == 1


# ---------------------------------------------------------------------------
# stats and viz


def test_stats_reports_mask(tmp_path, rng, capsys):
    _, _, _, grid_path = write_inputs(tmp_path, rng)
    mask_path = tmp_path / "m.evsm"
    main(["mask", str(grid_path), "--selector", "embedding", "--q", "0.5",
          "--out", str(mask_path)])
    capsys.readouterr()
    assert main(["stats", "--mask", str(mask_path)]) == 0
    out = capsys.readouterr().out
    assert "selector: embedding" in out
    assert "pruning-rate-used: 0.5" in out
    assert "per-frame retained:" in out


def test_viz_identity_on_all_ones_mask(tmp_path, rng, capsys):
    clip, _, clip_path, _ = write_inputs(tmp_path, rng)
    mask_path = tmp_path / "m.evsm"
    main(["mask", str(clip_path), "--selector", "rgb", "--q", "0",
          "--patch-size", "4", "--out", str(mask_path)])
    out_dir = tmp_path / "overlays"
    assert main(["viz", "--clip", str(clip_path), "--mask", str(mask_path),
                 "--out-dir", str(out_dir)]) == 0
    files = sorted(out_dir.iterdir())
    assert len(files) == clip.frames
    for t, f in enumerate(files):
        assert np.array_equal(tensorio.read_pnm(f), clip.data[t])


def test_viz_darkens_pruned_patches(tmp_path, rng, capsys):
    clip, _, clip_path, _ = write_inputs(tmp_path, rng)
    mask_path = tmp_path / "m.evsm"
    main(["mask", str(clip_path), "--selector", "rgb", "--q", "0.9",
          "--patch-size", "4", "--out", str(mask_path)])
    out_dir = tmp_path / "overlays"
    assert main(["viz", "--clip", str(clip_path), "--mask", str(mask_path),
                 "--out-dir", str(out_dir)]) == 0
    mask = tensorio.read_mask(mask_path)
    frame1 = tensorio.read_pnm(out_dir / "frame_00001.ppm")
    pruned_sites = np.argwhere(~mask.bits[1])
    assert len(pruned_sites)
    y, x = pruned_sites[0]
    block = clip.data[1, :, y * 4:(y + 1) * 4, x * 4:(x + 1) * 4].astype(np.float64)
    expected = np.floor(block * 0.25 + 0.5).astype(np.uint8)
    assert np.array_equal(frame1[:, y * 4:(y + 1) * 4, x * 4:(x + 1) * 4], expected)


def test_viz_without_patch_info_is_usage_error(tmp_path, rng, capsys):
    _, _, clip_path, grid_path = write_inputs(tmp_path, rng)
    mask_path = tmp_path / "m.evsm"
    main(["mask", str(grid_path), "--selector", "embedding", "--q", "0.5",
          "--out", str(mask_path)])
    assert main(["viz", "--clip", str(clip_path), "--mask", str(mask_path),
                 "--out-dir", str(tmp_path / "o")]) == 2


def test_missing_input_file_fails_cleanly(tmp_path, capsys):
    assert main(["stats", "--mask", str(tmp_path / "missing.evsm")]) == 1
    assert "error" in capsys.readouterr().err
