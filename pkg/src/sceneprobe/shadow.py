"""Passive cast-shadow model: evidence extraction, shear fit, gain/bias synthesis.

Shadows are modeled by an affine shear: a caster pixel at height d above the
caster's ground contact darkens the ground at (x + shear_x*d, y + shear_y*d),
with a single multiplicative gain. The synthesizer emits a scalar gain image
G and color bias image B applied as final = G * composite + B, so a learned
generator with the same interface can replace it. B is always zero here.

Non-additivity is enforced at synthesis: pixels whose lighting-map value is
already well below the scene median are left untouched, and so are shadow
pixels whose own ground position fails the occlusion test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataio import BitMask
from .errors import ShadowFitError
from .lighting import LightingMap, luminance
from .occlusion import InstanceObservation, OcclusionMap, row_from_y, y_from_row

SHADOW_LUM_RATIO = 0.85
CHROMA_TOLERANCE = 0.15
RADIUS_FACTOR = 2.0
MIN_OBSERVATIONS = 10
COARSE_RANGE = 3.0
COARSE_STEP = 0.1
REFINE_STEP = 0.01
REFINE_TOP_K = 16
LIGHTING_CUTOFF = 0.6
CONTACT_GAIN_DEFAULT = 0.85
CONTACT_DILATION = 3
MIN_PLATE_LUMINANCE = 8.0


@dataclass
class ShadowObservation:
    """Darkened ground pixels attributed to one caster sighting."""

    frame_index: int
    caster_mask: BitMask
    bottom_x: float
    bottom_y: int
    shadow_mask: np.ndarray
    ratio_samples: np.ndarray


@dataclass(frozen=True)
class ShadowModel:
    """Fitted shear parameters and darkening gain.

    mode is "directional" for the shear model or "contact" for the
    cloudy-day fallback (a dilated darkening around the caster's feet).
    """

    shear_x: float
    shear_y: float
    gain: float
    lighting_cutoff: float = LIGHTING_CUTOFF
    mode: str = "directional"
    n_observations: int = 0
    mean_iou: float = 0.0
    iou_std: float = 0.0

    def __post_init__(self):
        if not 0 < self.gain <= 1:
            raise ShadowFitError(f"gain {self.gain} outside (0, 1]")


@dataclass
class GainBias:
    """Per-pixel scalar gain and RGB bias; identity is gain 1, bias 0."""

    gain: np.ndarray
    bias: np.ndarray


def extract_shadow_evidence(frame: np.ndarray, plate: np.ndarray,
                            observation: InstanceObservation,
                            exclude_mask: np.ndarray | None = None,
                            other_bottoms: np.ndarray | None = None,
                            lum_ratio: float = SHADOW_LUM_RATIO,
                            chroma_tolerance: float = CHROMA_TOLERANCE,
                            radius_factor: float = RADIUS_FACTOR) -> ShadowObservation:
    """Find darkened, color-neutral pixels near a caster's ground contact.

    Candidate pixels lie within radius_factor times the caster height of
    its bottom point, outside exclude_mask (all detection masks of the
    frame; the caster's own mask is always excluded). When other casters
    are present in the frame (other_bottoms, shape (n, 2) of (x, y)),
    pixels strictly closer to one of them are attributed to that caster
    instead. A pixel counts as shadow when its luminance ratio to the
    plate is below lum_ratio and each channel darkens proportionally
    (within chroma_tolerance).
    """
    height, width = frame.shape[:2]
    flum = luminance(frame)
    plum = luminance(plate)
    center_row = row_from_y(observation.bottom_y, height)
    radius = radius_factor * observation.pixel_height
    rr = np.arange(height)[:, None] - center_row
    cc = np.arange(width)[None, :] - observation.bottom_x
    own_dist = rr * rr + cc * cc
    cand = own_dist <= radius * radius
    cand &= plum >= MIN_PLATE_LUMINANCE
    cand &= ~observation.mask.pixels
    if exclude_mask is not None:
        cand &= ~exclude_mask
    if other_bottoms is not None:
        for ox, oy in np.atleast_2d(other_bottoms):
            orr = np.arange(height)[:, None] - row_from_y(oy, height)
            occ_ = np.arange(width)[None, :] - ox
            cand &= own_dist <= (orr * orr + occ_ * occ_)
    ratio = np.zeros_like(flum)
    np.divide(flum, plum, out=ratio, where=plum > 0)
    dark = cand & (ratio > 0) & (ratio < lum_ratio)
    if dark.any():
        fr = frame.astype(np.float64)
        pl = plate.astype(np.float64)
        chan_ok = np.ones_like(dark)
        for ch in range(3):
            cr = np.zeros_like(flum)
            np.divide(fr[..., ch], pl[..., ch], out=cr,
                      where=pl[..., ch] > 0)
            rel = np.zeros_like(flum)
            np.divide(cr, ratio, out=rel, where=ratio > 0)
            chan_ok &= (pl[..., ch] > 0) & (np.abs(rel - 1.0) <= chroma_tolerance)
        dark &= chan_ok
    samples = ratio[dark]
    return ShadowObservation(observation.frame_index, observation.mask,
                             observation.bottom_x, observation.bottom_y,
                             dark, samples)


def _pack_evidence(evidence: list[ShadowObservation]):
    height, width = evidence[0].shadow_mask.shape
    rows_all, cols_all, offsets, bottoms = [], [], [0], []
    caster = np.zeros((len(evidence), height, width), dtype=bool)
    shadow = np.zeros((len(evidence), height, width), dtype=bool)
    counts = np.zeros(len(evidence), dtype=np.int64)
    for i, ev in enumerate(evidence):
        r, c = np.nonzero(ev.caster_mask.pixels)
        rows_all.append(r)
        cols_all.append(c)
        offsets.append(offsets[-1] + r.size)
        bottoms.append(ev.bottom_y)
        caster[i] = ev.caster_mask.pixels
        shadow[i] = ev.shadow_mask
        counts[i] = int(np.count_nonzero(ev.shadow_mask))
    return (np.concatenate(rows_all).astype(np.int64),
            np.concatenate(cols_all).astype(np.int64),
            np.asarray(offsets, dtype=np.int64),
            np.asarray(bottoms, dtype=np.int64),
            caster, shadow, counts)


def _lex_grid(xs: np.ndarray, ys: np.ndarray):
    gx = np.repeat(xs, ys.size)
    gy = np.tile(ys, xs.size)
    return gx, gy


def search_scores(evidence: list[ShadowObservation], cand_x: np.ndarray,
                  cand_y: np.ndarray) -> np.ndarray:
    """Mean predicted-vs-observed IoU for each candidate shear pair."""
    packed = _pack_evidence(evidence)
    return kernels.shear_search(cand_x, cand_y, *packed)


def fit_shadow_model(evidence: list[ShadowObservation],
                     min_observations: int = MIN_OBSERVATIONS,
                     lighting_cutoff: float = LIGHTING_CUTOFF) -> ShadowModel:
    """Coarse-to-fine shear search plus median darkening gain.

    The fine stage scans around the best few coarse cells, since thin
    footprints make the coarse landscape multi-modal. Candidates are
    scored in lexicographic (shear_x, shear_y) order and ties keep the
    first (smallest) pair, so the fit is deterministic.
    """
    usable = [e for e in evidence if e.shadow_mask.any()]
    if not usable:
        raise ShadowFitError("no shadow evidence")
    if len(usable) < min_observations:
        raise ShadowFitError(
            f"insufficient shadow observations: {len(usable)} < {min_observations}")

    steps = int(round(COARSE_RANGE / COARSE_STEP))
    coarse = np.arange(-steps, steps + 1) * COARSE_STEP
    gx, gy = _lex_grid(coarse, coarse)
    scores = search_scores(usable, gx, gy)
    seeds = np.argsort(-scores, kind="stable")[:REFINE_TOP_K]

    refine_offsets = np.arange(-10, 11) * REFINE_STEP
    pairs = []
    for idx in seeds:
        fine_x = np.clip(gx[idx] + refine_offsets, -COARSE_RANGE, COARSE_RANGE)
        fine_y = np.clip(gy[idx] + refine_offsets, -COARSE_RANGE, COARSE_RANGE)
        fx, fy = _lex_grid(np.unique(fine_x), np.unique(fine_y))
        pairs.append(np.stack([fx, fy], axis=1))
    cand = np.unique(np.round(np.concatenate(pairs), 6), axis=0)
    scores = search_scores(usable, cand[:, 0], cand[:, 1])
    best = int(np.argmax(scores))
    kx, ky, best_score = float(cand[best, 0]), float(cand[best, 1]), \
        float(scores[best])

    per_obs = np.array([_single_iou(e, kx, ky) for e in usable])
    gain = float(np.median(np.concatenate([e.ratio_samples for e in usable])))
    gain = min(max(gain, 1e-6), 1.0)
    return ShadowModel(kx, ky, gain, lighting_cutoff, "directional",
                       len(usable), best_score, float(per_obs.std()))


def _single_iou(ev: ShadowObservation, kx: float, ky: float) -> float:
    score = search_scores([ev], np.array([kx]), np.array([ky]))
    return float(score[0])


def contact_shadow_model(evidence: list[ShadowObservation] | None = None,
                         lighting_cutoff: float = LIGHTING_CUTOFF) -> ShadowModel:
    """Cloudy-scene fallback: darkening near the feet, no directional shear."""
    samples = (np.concatenate([e.ratio_samples for e in evidence])
               if evidence else np.empty(0))
    gain = float(np.median(samples)) if samples.size else CONTACT_GAIN_DEFAULT
    gain = min(max(gain, 1e-6), 1.0)
    n = len([e for e in evidence if e.ratio_samples.size]) if evidence else 0
    return ShadowModel(0.0, 0.0, gain, lighting_cutoff, "contact", n)


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(radius):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        out = grown
    return out


def _erode4(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] &= mask[:-1, :]
    out[:-1, :] &= mask[1:, :]
    out[:, 1:] &= mask[:, :-1]
    out[:, :-1] &= mask[:, 1:]
    out[0, :] = False
    out[-1, :] = False
    out[:, 0] = False
    out[:, -1] = False
    return out


def predict_footprint(model: ShadowModel, mask: np.ndarray,
                      bottom_y: int) -> np.ndarray:
    """Ground pixels the model expects this caster to darken."""
    height, width = mask.shape
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return np.zeros((height, width), dtype=bool)
    if model.mode == "contact":
        bottom_row = int(rows.max())
        fp = np.zeros((height, width), dtype=bool)
        fp[bottom_row, cols[rows == bottom_row]] = True
        return _dilate(fp, CONTACT_DILATION)
    return kernels.shear_footprint(rows, cols, int(bottom_y),
                                   model.shear_x, model.shear_y,
                                   height, width)


def synthesize_gain_bias(model: ShadowModel, mask: np.ndarray, bottom_y: int,
                         lmap: LightingMap | None,
                         occmap: OcclusionMap | None) -> GainBias:
    """Gain/bias images for one placed caster.

    Gain equals the model gain on the predicted footprint, feathered by a
    one-pixel ramp at its edge, except where the pixel is already dark
    (lighting below cutoff times the scene median) or where the shadow
    pixel itself fails the occlusion test: it is clipped wherever the map
    value sits in front of the shadow's own ground height (z < s_y). Bias
    is zero everywhere.
    """
    height, width = mask.shape
    gain = np.ones((height, width), dtype=np.float32)
    footprint = predict_footprint(model, mask, bottom_y)
    if footprint.any():
        gain[footprint] = model.gain
        edge = footprint & ~_erode4(footprint)
        gain[edge] = (1.0 + model.gain) / 2.0
        if lmap is not None and lmap.defined.any():
            lum = lmap.luminance_values()
            median = lmap.luminance_median()
            already_dark = lmap.defined & (lum < model.lighting_cutoff * median)
            gain[already_dark] = 1.0
        if occmap is not None:
            ygrid = np.broadcast_to(
                y_from_row(np.arange(height), height)[:, None], (height, width))
            gain[ygrid > occmap.values] = 1.0
    return GainBias(gain, np.zeros((height, width, 3), dtype=np.float32))


def apply_gain_bias(image: np.ndarray, gb: GainBias) -> np.ndarray:
    """final = clamp(round(G * image + B)), rounding half-up."""
    if gb.gain.shape != image.shape[:2] or gb.bias.shape != image.shape:
        raise ValueError("gain/bias dimensions do not match the image")
    return kernels.apply_gain_bias(image, gb.gain, gb.bias)


def combine_gains(parts: list[GainBias], height: int, width: int) -> GainBias:
    """Multiple casters under one light: per-pixel minimum of gains."""
    gain = np.ones((height, width), dtype=np.float32)
    for part in parts:
        np.minimum(gain, part.gain, out=gain)
    return GainBias(gain, np.zeros((height, width, 3), dtype=np.float32))
