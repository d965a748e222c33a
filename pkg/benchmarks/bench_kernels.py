#!/usr/bin/env python3
"""Compare the compiled kernels against the NumPy fallback.

Usage:
    python benchmarks/bench_kernels.py [--repeats N]

Shapes mirror a realistic serving input (32 frames of 512x512 pixels with
32-pixel effective patches; 16x16 embedding grid with 1280 channels).
"""

import argparse
import time

import numpy as np

from evs import kernels


def bench(fn, *args, repeats=5, **kwargs):
    fn(*args, **kwargs)  # warm-up
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args, **kwargs)
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--threads", type=int, default=0, help="0 = auto")
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "native" not in backends:
        print("warning: compiled backend unavailable, benchmarking numpy only")
    threads = args.threads or kernels.thread_count()

    rng = np.random.default_rng(0)
    cases = [
        ("patch diff u8 32x3x512x512 p32",
         "patch_mean_abs_diff",
         (rng.integers(0, 256, size=(32, 3, 512, 512), dtype=np.uint8), 32)),
        ("patch diff f32 8x3x512x512 p32",
         "patch_mean_abs_diff",
         ((rng.random((8, 3, 512, 512)) * 255).astype(np.float32), 32)),
        ("cosine 32x16x16x1280",
         "cosine_dissimilarity",
         (np.ascontiguousarray(rng.normal(size=(32, 16, 16, 1280)).astype(np.float32)),)),
    ]

    print(f"{'case':<34} " + " ".join(f"{name:>12}" for name in backends) + "   speedup")
    for label, fn_name, fn_args in cases:
        times = {}
        for name, mod in backends.items():
            fn = getattr(mod, fn_name)
            times[name] = bench(fn, *fn_args, num_threads=threads, repeats=args.repeats)
        row = f"{label:<34} " + " ".join(f"{times[n] * 1e3:>10.2f}ms" for n in backends)
        if "native" in times and "numpy" in times:
            row += f"   {times['numpy'] / times['native']:>6.2f}x"
        print(row)
    print(f"(best of {args.repeats}, {threads} thread(s) for the compiled backend)")


if __name__ == "__main__":
    main()
