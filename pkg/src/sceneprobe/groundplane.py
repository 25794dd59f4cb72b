"""Image-space height plane: pixel height as an affine function of the
bottom-middle point, fitted from person observations by least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OffPlaneError, PlaneFitError
from .occlusion import InstanceObservation

MIN_SAMPLES = 3
CONDITION_LIMIT = 1e-6
TRIM_SIGMA = 2.0


@dataclass(frozen=True)
class HeightSample:
    """Bottom-middle point (bottom-left origin) and pixel height of one person."""

    x: float
    y: float
    h: float


@dataclass(frozen=True)
class PlaneModel:
    """Coefficients of h = x_coeff*x + y_coeff*y + offset, with fit diagnostics."""

    x_coeff: float
    y_coeff: float
    offset: float
    n_samples: int
    rms_residual: float
    condition: float


def collect_height_samples(observations: list[InstanceObservation],
                           class_name: str = "person",
                           min_confidence: float = 0.9) -> list[HeightSample]:
    """Height samples from confident, whole-body person observations."""
    return [HeightSample(o.bottom_x, o.bottom_y, o.pixel_height)
            for o in observations
            if o.class_name == class_name and o.confidence >= min_confidence
            and o.pixel_height > 0]


def _condition(xs: np.ndarray, ys: np.ndarray) -> float:
    centered = np.stack([xs - xs.mean(), ys - ys.mean()], axis=1)
    svals = np.linalg.svd(centered, compute_uv=False)
    if svals[0] == 0:
        return 0.0
    return float(svals[-1] / svals[0])


def _solve(xs: np.ndarray, ys: np.ndarray, hs: np.ndarray):
    design = np.stack([xs, ys, np.ones_like(xs)], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, hs, rcond=None)
    residuals = design @ coeffs - hs
    return coeffs, residuals


def fit_plane(samples: list[HeightSample],
              trim_sigma: float = TRIM_SIGMA) -> PlaneModel:
    """Least-squares fit with one trim-and-refit pass at trim_sigma."""
    if len(samples) < MIN_SAMPLES:
        raise PlaneFitError(
            f"need at least {MIN_SAMPLES} height samples, got {len(samples)}")
    xs = np.array([s.x for s in samples], dtype=np.float64)
    ys = np.array([s.y for s in samples], dtype=np.float64)
    hs = np.array([s.h for s in samples], dtype=np.float64)
    condition = _condition(xs, ys)
    if condition < CONDITION_LIMIT:
        raise PlaneFitError(
            f"sample geometry is degenerate (condition {condition:.2e})")
    coeffs, residuals = _solve(xs, ys, hs)
    std = residuals.std()
    if std > 0:
        keep = np.abs(residuals) <= trim_sigma * std
        if MIN_SAMPLES <= keep.sum() < len(samples):
            kept_condition = _condition(xs[keep], ys[keep])
            if kept_condition >= CONDITION_LIMIT:
                xs, ys, hs = xs[keep], ys[keep], hs[keep]
                condition = kept_condition
                coeffs, residuals = _solve(xs, ys, hs)
    rms = float(np.sqrt(np.mean(residuals ** 2)))
    return PlaneModel(float(coeffs[0]), float(coeffs[1]), float(coeffs[2]),
                      int(xs.size), rms, condition)


def predict_height(model: PlaneModel, x: float, y: float) -> float:
    """Pixel height the plane predicts at a bottom point; must be positive."""
    h = model.x_coeff * x + model.y_coeff * y + model.offset
    if h <= 0:
        raise OffPlaneError(
            f"predicted height {h:.2f} at ({x:.1f}, {y:.1f}) is not positive")
    return float(h)


def relative_rescale(model: PlaneModel, reference_xy: tuple[float, float],
                     observed_height: float,
                     target_xy: tuple[float, float]) -> float:
    """Scale to apply to a reference sprite of observed height when moved.

    The prediction ratio at the reference cancels the observed height, so
    the result equals predicted(target) / predicted(reference).
    """
    if observed_height <= 0:
        raise OffPlaneError("observed reference height must be positive")
    h_ref = predict_height(model, *reference_xy)
    h_tgt = predict_height(model, *target_xy)
    ratio = observed_height / h_ref
    return ratio * h_tgt / observed_height
