"""Numba and numpy kernel paths must agree exactly."""

import numpy as np
import pytest

from sceneprobe import kernels

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA,
                                 reason="numba path disabled or unavailable")


@needs_numba
@pytest.mark.parametrize("n", [1, 2, 7, 15, 50])
def test_median_paths_agree(n):
    rng = np.random.default_rng(n)
    stack = rng.integers(0, 256, size=(n, 13, 17, 3), dtype=np.uint8)
    np.testing.assert_array_equal(kernels.median_stack_numpy(stack),
                                  kernels.median_stack_numba(stack))


@needs_numba
def test_occlusion_accumulate_paths_agree():
    rng = np.random.default_rng(1)
    a = np.full((20, 30), -1, dtype=np.int16)
    b = a.copy()
    for _ in range(40):
        n = int(rng.integers(1, 60))
        rows = rng.integers(0, 20, n)
        cols = rng.integers(0, 30, n)
        y = int(rng.integers(0, 20))
        kernels.occlusion_accumulate_numpy(a, rows, cols, y)
        kernels.occlusion_accumulate_numba(b, rows, cols, y)
    np.testing.assert_array_equal(a, b)


@needs_numba
def test_shear_footprint_paths_agree():
    rng = np.random.default_rng(2)
    for _ in range(30):
        mask = rng.random((25, 25)) < 0.4
        rows, cols = np.nonzero(mask)
        if rows.size == 0:
            continue
        kx = float(rng.uniform(-3, 3))
        ky = float(rng.uniform(-3, 3))
        yb = int(rng.integers(0, 25))
        np.testing.assert_array_equal(
            kernels.shear_footprint_numpy(rows, cols, yb, kx, ky, 25, 25),
            kernels.shear_footprint_numba(rows, cols, yb, kx, ky, 25, 25))


def _random_evidence(rng, n_obs, height=24, width=30):
    rows_all, cols_all, offsets, bottoms = [], [], [0], []
    caster = np.zeros((n_obs, height, width), dtype=bool)
    shadow = np.zeros((n_obs, height, width), dtype=bool)
    for i in range(n_obs):
        m = rng.random((height, width)) < 0.15
        caster[i] = m
        shadow[i] = (rng.random((height, width)) < 0.1) & ~m
        r, c = np.nonzero(m)
        rows_all.append(r)
        cols_all.append(c)
        offsets.append(offsets[-1] + r.size)
        bottoms.append(int(rng.integers(0, height)))
    counts = shadow.reshape(n_obs, -1).sum(axis=1).astype(np.int64)
    return (np.concatenate(rows_all).astype(np.int64),
            np.concatenate(cols_all).astype(np.int64),
            np.asarray(offsets, dtype=np.int64),
            np.asarray(bottoms, dtype=np.int64), caster, shadow, counts)


@needs_numba
def test_shear_search_paths_agree():
    rng = np.random.default_rng(3)
    packed = _random_evidence(rng, 6)
    cand = np.arange(-8, 9) * 0.25
    gx = np.repeat(cand, cand.size)
    gy = np.tile(cand, cand.size)
    a = kernels.shear_search_numpy(gx, gy, *packed)
    b = kernels.shear_search_numba(gx, gy, *packed)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@needs_numba
def test_apply_gain_bias_paths_agree():
    rng = np.random.default_rng(4)
    image = rng.integers(0, 256, size=(31, 27, 3), dtype=np.uint8)
    gain = rng.uniform(0, 1.6, size=(31, 27)).astype(np.float32)
    bias = rng.uniform(-40, 40, size=(31, 27, 3)).astype(np.float32)
    np.testing.assert_array_equal(
        kernels.apply_gain_bias_numpy(image, gain, bias),
        kernels.apply_gain_bias_numba(image, gain, bias))


def test_dispatch_names_resolve():
    assert kernels.ACTIVE_BACKEND in ("numba", "numpy")
    stack = np.zeros((3, 4, 4, 3), dtype=np.uint8)
    assert kernels.median_stack(stack).shape == (4, 4, 3)
