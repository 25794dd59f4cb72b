"""Benchmark the numba kernels against their pure-numpy twins.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Numba results include a warmup call so JIT compilation is not timed.
Set PROBE_NO_NUMBA=1 to confirm the numpy path is the one dispatched.
"""

from __future__ import annotations

import time

import numpy as np

from sceneprobe import kernels


def timed(fn, *args, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_median():
    rng = np.random.default_rng(0)
    stack = rng.integers(0, 256, size=(50, 800, 800, 3), dtype=np.uint8)
    return "median 50x800x800x3", (stack,), kernels.median_stack_numpy, \
        getattr(kernels, "median_stack_numba", None)


def bench_occlusion():
    rng = np.random.default_rng(1)
    n = 400_000
    rows = rng.integers(0, 800, n)
    cols = rng.integers(0, 800, n)

    def run(fn):
        zmap = np.full((800, 800), -1, dtype=np.int16)
        fn(zmap, rows, cols, 300)

    return "occlusion scatter-max 400k px", (), \
        lambda: run(kernels.occlusion_accumulate_numpy), \
        (lambda: run(kernels.occlusion_accumulate_numba)) \
        if kernels.HAVE_NUMBA else None


def bench_footprint():
    rng = np.random.default_rng(2)
    mask = rng.random((400, 200)) < 0.5
    rows, cols = np.nonzero(mask)
    args = (rows, cols, 40, 0.8, 0.1, 800, 800)
    return "shear footprint 40k px", args, kernels.shear_footprint_numpy, \
        getattr(kernels, "shear_footprint_numba", None)


def bench_search():
    rng = np.random.default_rng(3)
    n_obs, height, width = 30, 240, 320
    rows_all, cols_all, offsets, bottoms = [], [], [0], []
    caster = np.zeros((n_obs, height, width), dtype=bool)
    shadow = np.zeros((n_obs, height, width), dtype=bool)
    for i in range(n_obs):
        m = np.zeros((height, width), dtype=bool)
        r0, c0 = rng.integers(40, 180), rng.integers(30, 260)
        m[r0:r0 + 50, c0:c0 + 18] = True
        caster[i] = m
        shadow[i] = np.roll(m, (40, 30), (0, 1)) & ~m
        r, c = np.nonzero(m)
        rows_all.append(r)
        cols_all.append(c)
        offsets.append(offsets[-1] + r.size)
        bottoms.append(int(height - 1 - r.max()))
    packed = (np.concatenate(rows_all).astype(np.int64),
              np.concatenate(cols_all).astype(np.int64),
              np.asarray(offsets, dtype=np.int64),
              np.asarray(bottoms, dtype=np.int64), caster, shadow,
              shadow.reshape(n_obs, -1).sum(axis=1).astype(np.int64))
    cand = np.arange(-30, 31) * 0.1
    gx = np.repeat(cand, cand.size)
    gy = np.tile(cand, cand.size)
    args = (gx, gy) + packed
    return "shear search 3721 cells x 30 obs", args, \
        kernels.shear_search_numpy, getattr(kernels, "shear_search_numba", None)


def bench_gain():
    rng = np.random.default_rng(4)
    image = rng.integers(0, 256, size=(800, 800, 3), dtype=np.uint8)
    gain = rng.uniform(0.4, 1.0, size=(800, 800)).astype(np.float32)
    bias = np.zeros((800, 800, 3), dtype=np.float32)
    args = (image, gain, bias)
    return "gain/bias apply 800x800", args, kernels.apply_gain_bias_numpy, \
        getattr(kernels, "apply_gain_bias_numba", None)


def main() -> None:
    print(f"dispatched backend: {kernels.ACTIVE_BACKEND}")
    print(f"{'kernel':36} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for build in (bench_median, bench_occlusion, bench_footprint,
                  bench_search, bench_gain):
        name, args, numpy_fn, numba_fn = build()
        t_numpy = timed(numpy_fn, *args)
        if numba_fn is None:
            print(f"{name:36} {t_numpy * 1000:9.1f}ms {'n/a':>10} {'':>8}")
            continue
        numba_fn(*args)  # warmup / JIT
        t_numba = timed(numba_fn, *args)
        print(f"{name:36} {t_numpy * 1000:9.1f}ms {t_numba * 1000:9.1f}ms "
              f"{t_numpy / t_numba:7.1f}x")


if __name__ == "__main__":
    main()
