#!/usr/bin/env python3
"""Benchmark the hot kernels in both backends (numba loops vs pure numpy).

Run:  python3 benchmarks/kernel_benchmark.py [--repeats N]

Each kernel is timed on a workload shaped like real pipeline use (dense
descriptor grids over VGA-ish frames, 1024-word assignment, 256-component
mixture statistics). The global filter-response descriptor is not listed:
it is FFT-bound and runs on numpy.fft in both configurations.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from loopclose._backend import HAVE_NUMBA
from loopclose._kernels import get_kernels


def workloads(rng: np.random.Generator) -> dict:
    h, w = 480, 640
    mag = rng.random((h, w))
    frac = rng.random((h, w))
    b0 = rng.integers(0, 8, size=(h, w)).astype(np.int64)
    b1 = (b0 + 1) % 8
    xs = np.arange(0, w - 16 + 1, 8, dtype=np.int64)
    ys = np.arange(0, h - 16 + 1, 8, dtype=np.int64)

    n_local = 3000
    local128 = rng.normal(size=(n_local, 128))
    words = rng.normal(size=(1024, 128))
    local80 = rng.normal(size=(n_local, 80))
    means = rng.normal(size=(256, 80))
    variances = 0.5 + rng.random((256, 80))
    log_w = np.log(np.full(256, 1.0 / 256))
    resp = rng.random((n_local, 256))
    resp /= resp.sum(axis=1, keepdims=True)
    idx = rng.integers(0, 256, size=n_local).astype(np.int64)
    frame = rng.random((480, 640))

    return {
        "resize_bilinear (VGA -> 256x256)": (
            "resize_bilinear", (frame, 256, 256)),
        "sift_grid (VGA, step 8, patch 16)": (
            "sift_grid", (mag * (1 - frac), b0, mag * frac, b1, xs, ys, 16, 4, 8)),
        "assign_nearest (3000x128 vs 1024 words)": (
            "assign_nearest", (local128, words)),
        "gmm_log_joint (3000x80, K=256)": (
            "gmm_log_joint", (local80, means, variances, log_w)),
        "fv_sums (3000x80, K=256)": ("fv_sums", (local80, resp)),
        "vlad_sums (3000x80, K=256)": ("vlad_sums", (local80, idx, 256)),
    }


def time_call(fn, args, repeats: int) -> float:
    fn(*args)  # warm-up (JIT compilation, caches)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = {"numpy": get_kernels("numpy")}
    if HAVE_NUMBA:
        backends["numba"] = get_kernels("numba")
    else:
        print("numba unavailable or disabled; timing the numpy path only\n")

    rng = np.random.default_rng(42)
    loads = workloads(rng)

    name_w = max(len(n) for n in loads) + 2
    header = f"{'kernel':<{name_w}}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, (kernel, call_args) in loads.items():
        times = {
            b: time_call(impl[kernel], call_args, args.repeats)
            for b, impl in backends.items()
        }
        row = f"{label:<{name_w}}" + "".join(
            f"{times[b] * 1e3:>10.2f}ms" for b in backends
        )
        if len(times) == 2:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
