"""Spatially varying lighting map from probe mean colors, and relighting.

The map is a relative measure: it is never applied directly, only as the
ratio between the value at a new position and the value captured when the
object was first placed (its anchor).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataio import BitMask
from .errors import EmptyLightingMapError, MaskFormatError
from .occlusion import InstanceObservation


def luminance(image: np.ndarray) -> np.ndarray:
    """Integer-friendly luminance approximation (r + 2g + b) / 4."""
    img = image.astype(np.float64)
    return (img[..., 0] + 2.0 * img[..., 1] + img[..., 2]) / 4.0


@dataclass
class LightingMap:
    """Per-pixel RGB sum and sample count of covering observation colors.

    Treated as immutable once built; derived maps are cached for the
    render path.
    """

    sums: np.ndarray    # (H, W, 3) float32
    counts: np.ndarray  # (H, W) uint32

    def __post_init__(self):
        self._cache: dict = {}

    @property
    def defined(self) -> np.ndarray:
        if "defined" not in self._cache:
            self._cache["defined"] = self.counts > 0
        return self._cache["defined"]

    def values(self) -> np.ndarray:
        """Mean color map; zero where no observation covered the pixel."""
        if "values" not in self._cache:
            out = np.zeros_like(self.sums)
            d = self.defined
            out[d] = self.sums[d] / self.counts[d, None]
            self._cache["values"] = out
        return self._cache["values"]

    def luminance_values(self) -> np.ndarray:
        if "lum" not in self._cache:
            self._cache["lum"] = luminance(self.values())
        return self._cache["lum"]

    def luminance_median(self) -> float:
        """Median luminance over sampled pixels."""
        if "lum_median" not in self._cache:
            d = self.defined
            if not d.any():
                raise EmptyLightingMapError("lighting map has no sampled pixels")
            self._cache["lum_median"] = float(
                np.median(self.luminance_values()[d]))
        return self._cache["lum_median"]

    def global_mean(self) -> np.ndarray:
        if "global_mean" not in self._cache:
            d = self.defined
            if not d.any():
                raise EmptyLightingMapError("lighting map has no sampled pixels")
            self._cache["global_mean"] = self.values()[d].mean(axis=0)
        return self._cache["global_mean"]

    def merge(self, other: "LightingMap") -> "LightingMap":
        return LightingMap(self.sums + other.sums, self.counts + other.counts)


@dataclass(frozen=True)
class LightingAnchor:
    """Reference lighting captured at an object's initial placement."""

    factor: tuple[float, float, float]

    def __post_init__(self):
        if min(self.factor) <= 0:
            raise ValueError("lighting anchor channels must be positive")


def build_lighting_map(observations: list[InstanceObservation],
                       width: int, height: int) -> LightingMap:
    """Accumulate each observation's mean color over its refined mask."""
    sums = np.zeros((height, width, 3), dtype=np.float32)
    counts = np.zeros((height, width), dtype=np.uint32)
    for obs in observations:
        m = obs.mask.pixels
        sums[m] += np.asarray(obs.mean_color, dtype=np.float32)
        counts[m] += 1
    return LightingMap(sums, counts)


def lighting_factor(lmap: LightingMap, mask: BitMask | np.ndarray) -> np.ndarray:
    """Average lighting under a placed mask, sampled pixels only.

    Falls back to the scene-global mean when the mask covers no sampled
    pixel; raises EmptyLightingMapError when the map itself is empty.
    """
    pixels = mask.pixels if isinstance(mask, BitMask) else mask
    sampled = pixels & lmap.defined
    if not sampled.any():
        return lmap.global_mean()
    return lmap.values()[sampled].mean(axis=0)


def relight(sprite: np.ndarray, anchor: LightingAnchor,
            target: np.ndarray) -> np.ndarray:
    """Scale sprite channels by target/anchor, clamped to [0, 255]."""
    scale = np.asarray(target, dtype=np.float64) / np.asarray(anchor.factor)
    out = np.floor(sprite.astype(np.float64) * scale + 0.5)
    return np.clip(out, 0, 255).astype(np.uint8)


def albedo_variance(observations: list[InstanceObservation],
                    width: int, height: int, grid: int = 4) -> np.ndarray:
    """Diagnostic: variance of observation luminance per image cell.

    Large spread between cells hints that object colors correlate with
    position, which would bias the lighting map.
    """
    out = np.full((grid, grid), np.nan)
    cells: dict[tuple[int, int], list[float]] = {}
    for obs in observations:
        gx = min(grid - 1, int(obs.bottom_x * grid / width))
        gy = min(grid - 1, int(obs.bottom_y * grid / height))
        lum = (obs.mean_color[0] + 2 * obs.mean_color[1] + obs.mean_color[2]) / 4
        cells.setdefault((gy, gx), []).append(lum)
    for (gy, gx), vals in cells.items():
        out[gy, gx] = float(np.var(vals))
    return out


# ---------------------------------------------------------------------------
# persistence and visualization

_MAP_HEADER = struct.Struct("<II")


def lighting_map_to_bytes(lmap: LightingMap) -> bytes:
    height, width = lmap.counts.shape
    sums = np.ascontiguousarray(lmap.sums.astype("<f4"))
    counts = np.ascontiguousarray(lmap.counts.astype("<u4"))
    return _MAP_HEADER.pack(width, height) + sums.tobytes() + counts.tobytes()


def lighting_map_from_bytes(data: bytes) -> LightingMap:
    if len(data) < _MAP_HEADER.size:
        raise MaskFormatError("lighting map data truncated")
    width, height = _MAP_HEADER.unpack_from(data)
    n = width * height
    expected = _MAP_HEADER.size + n * 3 * 4 + n * 4
    if len(data) != expected:
        raise MaskFormatError("lighting map size mismatch")
    sums = np.frombuffer(data, dtype="<f4", count=n * 3, offset=_MAP_HEADER.size)
    counts = np.frombuffer(data, dtype="<u4", count=n,
                           offset=_MAP_HEADER.size + n * 3 * 4)
    return LightingMap(sums.reshape(height, width, 3).astype(np.float32),
                       counts.reshape(height, width).astype(np.uint32))


def lighting_viz(lmap: LightingMap) -> np.ndarray:
    """Mean color where sampled, black elsewhere."""
    vals = np.clip(np.floor(lmap.values() + 0.5), 0, 255).astype(np.uint8)
    vals[~lmap.defined] = 0
    return vals
