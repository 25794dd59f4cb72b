"""Hot per-pixel kernels, JIT-compiled with numba when available.

Every kernel has a pure-numpy twin (suffix ``_numpy``). The module-level
names dispatch to the numba build unless the environment variable
``PROBE_NO_NUMBA`` is set to a non-empty value other than ``0`` (or numba
is not importable). ``benchmarks/bench_kernels.py`` compares both paths.
"""

from __future__ import annotations

import math
import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("PROBE_NO_NUMBA", "").strip() not in ("", "0")


try:
    if _numba_disabled():
        raise ImportError("numba disabled via PROBE_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# median of a frame stack (lower median for even window lengths)


def median_stack_numpy(stack: np.ndarray) -> np.ndarray:
    """Per-pixel, per-channel lower median of a (N, H, W, C) uint8 stack."""
    n = stack.shape[0]
    k = (n - 1) // 2
    return np.partition(stack, k, axis=0)[k]


if HAVE_NUMBA:

    @njit(cache=True)
    def _median_flat_jit(stack, out, k):
        # stack: (N, P) uint8, counting sort per pixel
        n, p = stack.shape
        counts = np.empty(256, dtype=np.int32)
        for j in range(p):
            counts[:] = 0
            for i in range(n):
                counts[stack[i, j]] += 1
            cum = 0
            for v in range(256):
                cum += counts[v]
                if cum > k:
                    out[j] = v
                    break

    def median_stack_numba(stack: np.ndarray) -> np.ndarray:
        n = stack.shape[0]
        flat = np.ascontiguousarray(stack.reshape(n, -1))
        out = np.empty(flat.shape[1], dtype=np.uint8)
        _median_flat_jit(flat, out, (n - 1) // 2)
        return out.reshape(stack.shape[1:])


# ---------------------------------------------------------------------------
# occlusion map accumulation: per-pixel max of observation bottom-y


def occlusion_accumulate_numpy(zmap: np.ndarray, rows: np.ndarray,
                               cols: np.ndarray, bottom_y: int) -> None:
    """In-place max-update of the int16 occlusion grid at the given pixels."""
    np.maximum.at(zmap, (rows, cols), np.int16(bottom_y))


if HAVE_NUMBA:

    @njit(cache=True)
    def _occlusion_accumulate_jit(zmap, rows, cols, bottom_y):
        for i in range(rows.shape[0]):
            r = rows[i]
            c = cols[i]
            if zmap[r, c] < bottom_y:
                zmap[r, c] = bottom_y

    def occlusion_accumulate_numba(zmap: np.ndarray, rows: np.ndarray,
                                   cols: np.ndarray, bottom_y: int) -> None:
        _occlusion_accumulate_jit(zmap, rows, cols, np.int16(bottom_y))


# ---------------------------------------------------------------------------
# shear footprint: project caster pixels onto the ground along the shear map


def shear_footprint_numpy(rows: np.ndarray, cols: np.ndarray, bottom_y: int,
                          shear_x: float, shear_y: float,
                          height: int, width: int) -> np.ndarray:
    """Boolean (H, W) grid of ground pixels shadowed by the given caster pixels.

    A caster pixel at bottom-left-origin height d above the caster bottom
    lands at column + shear_x*d, bottom_y + shear_y*d (rounded half-up).
    """
    d = (height - 1 - rows).astype(np.float64) - bottom_y
    tc = np.floor(cols + shear_x * d + 0.5).astype(np.int64)
    ty = np.floor(bottom_y + shear_y * d + 0.5).astype(np.int64)
    tr = height - 1 - ty
    ok = (tr >= 0) & (tr < height) & (tc >= 0) & (tc < width)
    out = np.zeros((height, width), dtype=bool)
    out[tr[ok], tc[ok]] = True
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _shear_footprint_jit(rows, cols, bottom_y, shear_x, shear_y, out):
        height, width = out.shape
        for i in range(rows.shape[0]):
            d = float(height - 1 - rows[i]) - bottom_y
            tc = int(math.floor(cols[i] + shear_x * d + 0.5))
            ty = int(math.floor(bottom_y + shear_y * d + 0.5))
            tr = height - 1 - ty
            if 0 <= tr < height and 0 <= tc < width:
                out[tr, tc] = True

    def shear_footprint_numba(rows: np.ndarray, cols: np.ndarray, bottom_y: int,
                              shear_x: float, shear_y: float,
                              height: int, width: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=np.bool_)
        _shear_footprint_jit(rows.astype(np.int64), cols.astype(np.int64),
                             float(bottom_y), shear_x, shear_y, out)
        return out


# ---------------------------------------------------------------------------
# shear parameter search: mean IoU of predicted vs observed shadow masks


def shear_search_numpy(cand_x: np.ndarray, cand_y: np.ndarray,
                       px_rows: np.ndarray, px_cols: np.ndarray,
                       offsets: np.ndarray, bottoms: np.ndarray,
                       caster: np.ndarray, shadow: np.ndarray,
                       shadow_counts: np.ndarray) -> np.ndarray:
    """Score every (cand_x[i], cand_y[i]) shear pair.

    px_rows/px_cols hold the caster mask pixels of all observations
    concatenated, sliced by offsets. caster/shadow are (n_obs, H, W) bool.
    Returns the mean IoU across observations for each candidate; predicted
    footprints exclude the caster's own pixels, matching how shadow
    evidence is extracted.
    """
    n_obs = bottoms.shape[0]
    height, width = caster.shape[1:]
    caster_flat = caster.reshape(n_obs, -1)
    shadow_flat = shadow.reshape(n_obs, -1)
    deltas = []
    for i in range(n_obs):
        sl = slice(offsets[i], offsets[i + 1])
        deltas.append((height - 1 - px_rows[sl]).astype(np.float64) - bottoms[i])
    scores = np.zeros(cand_x.shape[0])
    for ci in range(cand_x.shape[0]):
        kx = cand_x[ci]
        ky = cand_y[ci]
        total = 0.0
        for i in range(n_obs):
            sl = slice(offsets[i], offsets[i + 1])
            d = deltas[i]
            tc = np.floor(px_cols[sl] + kx * d + 0.5).astype(np.int64)
            ty = np.floor(bottoms[i] + ky * d + 0.5).astype(np.int64)
            tr = height - 1 - ty
            ok = (tr >= 0) & (tr < height) & (tc >= 0) & (tc < width)
            flat = np.unique(tr[ok] * width + tc[ok])
            flat = flat[~caster_flat[i, flat]]
            pred = flat.shape[0]
            inter = int(np.count_nonzero(shadow_flat[i, flat]))
            union = pred + int(shadow_counts[i]) - inter
            if union > 0:
                total += inter / union
        scores[ci] = total / n_obs
    return scores


if HAVE_NUMBA:

    @njit(cache=True)
    def _shear_search_jit(cand_x, cand_y, px_rows, px_cols, offsets, bottoms,
                          caster, shadow, shadow_counts, scores):
        n_obs = bottoms.shape[0]
        height = caster.shape[1]
        width = caster.shape[2]
        visited = np.zeros((height, width), dtype=np.int64)
        stamp = 0
        for ci in range(cand_x.shape[0]):
            kx = cand_x[ci]
            ky = cand_y[ci]
            total = 0.0
            for i in range(n_obs):
                stamp += 1
                pred = 0
                inter = 0
                yb = float(bottoms[i])
                for j in range(offsets[i], offsets[i + 1]):
                    d = float(height - 1 - px_rows[j]) - yb
                    tc = int(math.floor(px_cols[j] + kx * d + 0.5))
                    ty = int(math.floor(yb + ky * d + 0.5))
                    tr = height - 1 - ty
                    if 0 <= tr < height and 0 <= tc < width:
                        if visited[tr, tc] != stamp:
                            visited[tr, tc] = stamp
                            if not caster[i, tr, tc]:
                                pred += 1
                                if shadow[i, tr, tc]:
                                    inter += 1
                union = pred + shadow_counts[i] - inter
                if union > 0:
                    total += inter / union
            scores[ci] = total / n_obs

    def shear_search_numba(cand_x: np.ndarray, cand_y: np.ndarray,
                           px_rows: np.ndarray, px_cols: np.ndarray,
                           offsets: np.ndarray, bottoms: np.ndarray,
                           caster: np.ndarray, shadow: np.ndarray,
                           shadow_counts: np.ndarray) -> np.ndarray:
        scores = np.zeros(cand_x.shape[0])
        _shear_search_jit(cand_x, cand_y,
                          px_rows.astype(np.int64), px_cols.astype(np.int64),
                          offsets.astype(np.int64), bottoms.astype(np.int64),
                          caster, shadow, shadow_counts.astype(np.int64),
                          scores)
        return scores


# ---------------------------------------------------------------------------
# final compositing arithmetic: out = clamp(round(G * I + B))


def apply_gain_bias_numpy(image: np.ndarray, gain: np.ndarray,
                          bias: np.ndarray) -> np.ndarray:
    """Per-pixel gain/bias on a uint8 image, rounding half-up, clamped."""
    v = gain[..., None].astype(np.float64) * image + bias
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


if HAVE_NUMBA:

    @njit(cache=True)
    def _apply_gain_bias_jit(image, gain, bias, out):
        height, width, _ = image.shape
        for r in range(height):
            for c in range(width):
                g = gain[r, c]
                for ch in range(3):
                    v = g * image[r, c, ch] + bias[r, c, ch]
                    v = math.floor(v + 0.5)
                    if v < 0:
                        v = 0.0
                    elif v > 255:
                        v = 255.0
                    out[r, c, ch] = np.uint8(v)

    def apply_gain_bias_numba(image: np.ndarray, gain: np.ndarray,
                              bias: np.ndarray) -> np.ndarray:
        out = np.empty_like(image)
        _apply_gain_bias_jit(image, gain.astype(np.float64),
                             bias.astype(np.float64), out)
        return out


# ---------------------------------------------------------------------------
# dispatch

if HAVE_NUMBA:
    median_stack = median_stack_numba
    occlusion_accumulate = occlusion_accumulate_numba
    shear_footprint = shear_footprint_numba
    shear_search = shear_search_numba
    apply_gain_bias = apply_gain_bias_numba
    ACTIVE_BACKEND = "numba"
else:
    median_stack = median_stack_numpy
    occlusion_accumulate = occlusion_accumulate_numpy
    shear_footprint = shear_footprint_numpy
    shear_search = shear_search_numpy
    apply_gain_bias = apply_gain_bias_numpy
    ACTIVE_BACKEND = "numpy"
