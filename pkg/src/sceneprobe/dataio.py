"""Scene loading: manifests, frames, and run-length-encoded instance masks.

A scene directory holds ``scene.json``, ``frames/<frame>.png`` (8-bit RGB)
and ``masks/<frame>.jsonl`` with one detection per line
(``class_name``, ``confidence``, ``runs``). Runs are row-major and start
with a background count.
"""

from __future__ import annotations

import io
import json
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ManifestError, MaskFormatError

DEFAULT_CLASS_WHITELIST = (
    "person", "bicycle", "car", "motorcycle", "bus", "truck",
    "backpack", "umbrella", "handbag", "tie", "suitcase",
)

# alpha values at or above this count as foreground in sprite cut-outs
ALPHA_THRESHOLD = 128


@dataclass(frozen=True)
class SceneManifest:
    """Static description of one captured scene."""

    width: int
    height: int
    fps: float
    frame_count: int
    frame_path_pattern: str
    mask_path_pattern: str
    class_whitelist: tuple[str, ...] = DEFAULT_CLASS_WHITELIST
    split_fraction: float = 0.95
    root: Path = field(default_factory=Path)

    def frame_path(self, index: int) -> Path:
        return self.root / self.frame_path_pattern.format(frame=index)

    def mask_path(self, index: int) -> Path:
        return self.root / self.mask_path_pattern.format(frame=index)

    @property
    def train_count(self) -> int:
        return max(1, int(self.frame_count * self.split_fraction))

    @property
    def train_frames(self) -> range:
        return range(self.train_count)

    @property
    def test_frames(self) -> range:
        return range(self.train_count, self.frame_count)


@dataclass(frozen=True)
class Frame:
    """One video frame as a (H, W, 3) uint8 RGB raster."""

    index: int
    pixels: np.ndarray


@dataclass
class BitMask:
    """Binary instance mask stored as a boolean (H, W) raster."""

    width: int
    height: int
    pixels: np.ndarray

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.pixels))


@dataclass(frozen=True)
class RawDetection:
    """One ingested segmentation result for one frame."""

    frame_index: int
    class_name: str
    confidence: float
    mask: BitMask


def decode_mask(runs: list[int], width: int, height: int) -> BitMask:
    """Expand background-first row-major runs into a BitMask."""
    runs_arr = np.asarray(runs, dtype=np.int64)
    if runs_arr.size and runs_arr.min() < 0:
        raise MaskFormatError("negative run length")
    total = int(runs_arr.sum())
    if total != width * height:
        raise MaskFormatError(
            f"runs sum to {total}, expected {width * height} for {width}x{height}")
    vals = np.zeros(runs_arr.size, dtype=bool)
    vals[1::2] = True
    flat = np.repeat(vals, runs_arr)
    return BitMask(width, height, flat.reshape(height, width))


def encode_mask(mask: BitMask) -> list[int]:
    """Inverse of decode_mask; decode(encode(m)) == m exactly."""
    flat = mask.pixels.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(starts).tolist()
    if flat.size and flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


_MANIFEST_FIELDS = {
    "width": int, "height": int, "fps": (int, float), "frame_count": int,
    "frame_path_pattern": str, "mask_path_pattern": str,
}


def load_manifest(path: str | Path) -> SceneManifest:
    """Read and validate a scene.json manifest."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    for name, types in _MANIFEST_FIELDS.items():
        if name not in raw:
            raise ManifestError(f"manifest missing field {name!r}")
        if not isinstance(raw[name], types) or isinstance(raw[name], bool):
            raise ManifestError(f"manifest field {name!r} has wrong type")
    if raw["frame_count"] < 1:
        raise ManifestError("empty scene: frame_count must be >= 1")
    if raw["width"] < 1 or raw["height"] < 1:
        raise ManifestError("image dimensions must be >= 1")
    if raw["fps"] <= 0:
        raise ManifestError("fps must be > 0")
    split = raw.get("split_fraction", 0.95)
    if not isinstance(split, (int, float)) or not (0 < split <= 1):
        raise ManifestError("split_fraction must be in (0, 1]")
    whitelist = tuple(raw.get("class_whitelist", DEFAULT_CLASS_WHITELIST))
    for pattern_field in ("frame_path_pattern", "mask_path_pattern"):
        if "{frame" not in raw[pattern_field]:
            raise ManifestError(f"{pattern_field} must contain a {{frame}} placeholder")
    manifest = SceneManifest(
        width=raw["width"], height=raw["height"], fps=float(raw["fps"]),
        frame_count=raw["frame_count"],
        frame_path_pattern=raw["frame_path_pattern"],
        mask_path_pattern=raw["mask_path_pattern"],
        class_whitelist=whitelist, split_fraction=float(split),
        root=path.parent,
    )
    for probe_path in (manifest.frame_path(0), manifest.mask_path(0)):
        if not probe_path.is_file():
            raise ManifestError(f"path pattern resolves to no file: {probe_path}")
    return manifest


def manifest_to_dict(manifest: SceneManifest) -> dict:
    return {
        "width": manifest.width, "height": manifest.height,
        "fps": manifest.fps, "frame_count": manifest.frame_count,
        "frame_path_pattern": manifest.frame_path_pattern,
        "mask_path_pattern": manifest.mask_path_pattern,
        "class_whitelist": list(manifest.class_whitelist),
        "split_fraction": manifest.split_fraction,
    }


def load_detections(manifest: SceneManifest, frame_index: int,
                    min_confidence: float) -> list[RawDetection]:
    """Detections for one frame, filtered by confidence and class whitelist.

    A missing mask file raises FileNotFoundError; a present but empty file
    yields an empty list.
    """
    if not 0 <= frame_index < manifest.frame_count:
        raise ManifestError(f"frame index {frame_index} out of range")
    path = manifest.mask_path(frame_index)
    if not path.is_file():
        raise FileNotFoundError(f"mask file missing: {path}")
    out: list[RawDetection] = []
    whitelist = set(manifest.class_whitelist)
    for line_no, line in enumerate(path.read_text().splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            cls = rec["class_name"]
            conf = float(rec["confidence"])
            runs = rec["runs"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MaskFormatError(f"{path}:{line_no + 1}: bad detection line: {exc}") from exc
        if not 0 <= conf <= 1:
            raise MaskFormatError(f"{path}:{line_no + 1}: confidence {conf} outside [0, 1]")
        if conf < min_confidence or cls not in whitelist:
            continue
        mask = decode_mask(runs, manifest.width, manifest.height)
        out.append(RawDetection(frame_index, cls, conf, mask))
    return out


# ---------------------------------------------------------------------------
# image I/O (shared by CLI and service so outputs are byte-identical)


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG as (H, W, 3) uint8 RGB."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def encode_png(image: np.ndarray) -> bytes:
    """Deterministic PNG bytes for a uint8 RGB raster."""
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_image(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(image))


def load_sprite(path_or_bytes: str | Path | bytes) -> tuple[np.ndarray, np.ndarray]:
    """Read an RGBA cut-out; returns (rgb uint8, boolean mask from alpha)."""
    src = io.BytesIO(path_or_bytes) if isinstance(path_or_bytes, bytes) else path_or_bytes
    with Image.open(src) as img:
        rgba = np.asarray(img.convert("RGBA"), dtype=np.uint8)
    rgb = rgba[..., :3].copy()
    mask = rgba[..., 3] >= ALPHA_THRESHOLD
    return rgb, mask


class Scene:
    """A loaded scene: manifest plus cached frame and detection access."""

    def __init__(self, manifest: SceneManifest, frame_cache: int = 64):
        self.manifest = manifest
        self._frame_cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._cache_size = frame_cache

    @classmethod
    def open(cls, scene_dir: str | Path) -> "Scene":
        return cls(load_manifest(Path(scene_dir) / "scene.json"))

    def frame(self, index: int) -> np.ndarray:
        cached = self._frame_cache.get(index)
        if cached is not None:
            self._frame_cache.move_to_end(index)
            return cached
        pixels = load_image(self.manifest.frame_path(index))
        if pixels.shape != (self.manifest.height, self.manifest.width, 3):
            raise ManifestError(
                f"frame {index} has shape {pixels.shape[:2]}, manifest says "
                f"{(self.manifest.height, self.manifest.width)}")
        self._frame_cache[index] = pixels
        if len(self._frame_cache) > self._cache_size:
            self._frame_cache.popitem(last=False)
        return pixels

    def detections(self, index: int, min_confidence: float) -> list[RawDetection]:
        return load_detections(self.manifest, index, min_confidence)
