"""Mask refinement, occlusion map accumulation, and occlusion-aware compositing.

All public y values use a bottom-left origin (y grows upward); rasters stay
top-left row-major, converted at the boundary with y = height - 1 - row.
The occlusion map records, per pixel, the largest bottom-y of any refined
observation that covered it (-1 when never covered). An inserted object
with bottom y_j is drawn at a pixel only when y_j is strictly below that
recorded value.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataio import BitMask, RawDetection
from .errors import MaskFormatError

DEFAULT_TAU = 30.0
MIN_MASK_AREA = 50
NEVER_OCCLUDED = -1


def y_from_row(row, height: int):
    return height - 1 - row


def row_from_y(y, height: int):
    return height - 1 - y


@dataclass(frozen=True)
class InstanceObservation:
    """One refined sighting of a moving object in one frame."""

    frame_index: int
    class_name: str
    confidence: float
    mask: BitMask
    bottom_y: int
    bottom_x: float
    pixel_height: int
    mean_color: tuple[float, float, float]


@dataclass
class OcclusionMap:
    """int16 grid of per-pixel occlusion thresholds in bottom-left y."""

    values: np.ndarray

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def color_distance(frame: np.ndarray, plate: np.ndarray) -> np.ndarray:
    """Max per-channel absolute difference between two uint8 rasters."""
    diff = np.abs(frame.astype(np.int16) - plate.astype(np.int16))
    return diff.max(axis=-1)


def refine_mask(detection: RawDetection, frame: np.ndarray,
                plate: np.ndarray, tau: float = DEFAULT_TAU) -> BitMask:
    """Drop detection pixels whose color stays within tau of the plate."""
    if frame.shape != plate.shape:
        raise ValueError("frame and plate dimensions differ")
    keep = detection.mask.pixels & (color_distance(frame, plate) > tau)
    return BitMask(detection.mask.width, detection.mask.height, keep)


def make_observation(detection: RawDetection, refined: BitMask,
                     frame: np.ndarray) -> InstanceObservation:
    rows, cols = np.nonzero(refined.pixels)
    height = refined.height
    max_row = int(rows.max())
    min_row = int(rows.min())
    bottom_y = y_from_row(max_row, height)
    pixel_height = max_row - min_row + 1
    bottom_cols = cols[rows == max_row]
    bottom_x = (int(bottom_cols.min()) + int(bottom_cols.max())) / 2.0
    mean = frame[rows, cols].mean(axis=0)
    return InstanceObservation(
        frame_index=detection.frame_index, class_name=detection.class_name,
        confidence=detection.confidence, mask=refined,
        bottom_y=int(bottom_y), bottom_x=bottom_x,
        pixel_height=int(pixel_height),
        mean_color=(float(mean[0]), float(mean[1]), float(mean[2])))


def observe_frame(frame: np.ndarray, detections: list[RawDetection],
                  plate: np.ndarray, tau: float = DEFAULT_TAU,
                  min_area: int = MIN_MASK_AREA) -> list[InstanceObservation]:
    """Refine each detection against the plate and keep the solid ones."""
    out = []
    for det in detections:
        refined = refine_mask(det, frame, plate, tau)
        if refined.count >= min_area:
            out.append(make_observation(det, refined, frame))
    return out


def observe(frames: list[np.ndarray], detections: list[list[RawDetection]],
            plates: list[np.ndarray], tau: float = DEFAULT_TAU,
            min_area: int = MIN_MASK_AREA) -> list[InstanceObservation]:
    if not (len(frames) == len(detections) == len(plates)):
        raise ValueError("frames, detections, and plates must align")
    out = []
    for frame, dets, plate in zip(frames, detections, plates):
        out.extend(observe_frame(frame, dets, plate, tau, min_area))
    return out


def build_occlusion_map(observations: list[InstanceObservation],
                        width: int, height: int) -> OcclusionMap:
    """Per-pixel max of covering observation bottoms; order independent."""
    values = np.full((height, width), NEVER_OCCLUDED, dtype=np.int16)
    for obs in observations:
        rows, cols = np.nonzero(obs.mask.pixels)
        kernels.occlusion_accumulate(values, rows, cols, obs.bottom_y)
    return OcclusionMap(values)


def composite_object(base: np.ndarray, sprite: np.ndarray, mask: np.ndarray,
                     bottom_y: int, occmap: OcclusionMap | None) -> np.ndarray:
    """Draw sprite pixels over base where the occlusion test passes.

    With occmap None the test is skipped (plain paste). Pixels whose map
    value is -1 never show inserted content.
    """
    out = base.copy()
    if occmap is None:
        draw = mask
    else:
        draw = mask & (bottom_y < occmap.values)
    out[draw] = sprite[draw]
    return out


# ---------------------------------------------------------------------------
# persistence and visualization

_MAP_HEADER = struct.Struct("<II")


def occlusion_map_to_bytes(occmap: OcclusionMap) -> bytes:
    values = np.ascontiguousarray(occmap.values.astype("<i2"))
    return _MAP_HEADER.pack(occmap.width, occmap.height) + values.tobytes()


def occlusion_map_from_bytes(data: bytes) -> OcclusionMap:
    if len(data) < _MAP_HEADER.size:
        raise MaskFormatError("occlusion map data truncated")
    width, height = _MAP_HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<i2", offset=_MAP_HEADER.size)
    if body.size != width * height:
        raise MaskFormatError("occlusion map size mismatch")
    return OcclusionMap(body.reshape(height, width).astype(np.int16))


def occlusion_viz(occmap: OcclusionMap) -> np.ndarray:
    """Pseudocolor rendering: black = never occluded, yellow to red with
    increasing threshold."""
    height, width = occmap.values.shape
    out = np.zeros((height, width, 3), dtype=np.uint8)
    covered = occmap.values >= 0
    if covered.any():
        denom = max(1, height - 1)
        frac = occmap.values[covered].astype(np.float64) / denom
        out[covered, 0] = 255
        out[covered, 1] = np.clip(np.floor(255 * (1 - frac) + 0.5), 0, 255)
    return out
