"""Synthetic fixed-camera scenes with exact analytic ground truth.

A pinhole camera at the origin looks down +Z with the principal point at
the image center; pixel coordinates are bottom-left origin. The ground is
the world plane a*X + b*Y + c*Z = 1, so a sprite of world height S standing
at depth Z projects to pixel height S*f/Z, and pixel height is an exact
affine function of the bottom point. Cast shadows are drawn by shearing
each silhouette along the configured light direction and darkening by a
fixed gain, never darkening a region that is already dark.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import SceneManifest, encode_mask, BitMask, manifest_to_dict, save_image
from .errors import SceneConfigError


@dataclass(frozen=True)
class BrightnessRegion:
    """Axis-aligned image rect (bottom-left origin, half-open) with a light factor."""

    x0: int
    y0: int
    x1: int
    y1: int
    factor: float


@dataclass(frozen=True)
class OccluderBox:
    """Fronto-parallel rectangle standing on the ground at a fixed depth."""

    x_min: float
    x_max: float
    z: float
    height: float
    color: tuple[int, int, int] = (60, 40, 30)


@dataclass(frozen=True)
class SpriteTrack:
    """One moving object: a silhouette walking through world positions.

    positions[i] applies at frame start_frame + i and is either (X, Z) on
    the ground plane or an explicit (X, Y, Z) that must satisfy the plane
    equation.
    """

    start_frame: int
    positions: tuple
    albedo: tuple[int, int, int]
    height_multiplier: float = 1.0
    width_ratio: float = 0.35
    shape: str = "person"
    class_name: str = "person"


@dataclass(frozen=True)
class SynthConfig:
    width: int = 240
    height: int = 180
    focal_length: float = 200.0
    ground_plane: tuple[float, float, float] = (0.0, -0.5, 0.0)
    person_height: float = 1.7
    occluders: tuple[OccluderBox, ...] = ()
    light_direction: tuple[float, float, float] | None = None
    shadow_gain: float = 0.5
    brightness_regions: tuple[BrightnessRegion, ...] = ()
    sprites: tuple[SpriteTrack, ...] = ()
    fps: float = 15.0
    background_color: tuple[int, int, int] = (110, 120, 130)
    seed: int = 0
    height_noise_sigma: float = 0.0
    dark_region_cutoff: float = 0.6

    def __post_init__(self):
        if not 0 < self.shadow_gain < 1:
            raise SceneConfigError("shadow_gain must be in (0, 1)")
        if self.ground_plane[1] == 0:
            raise SceneConfigError("ground plane must constrain Y (b != 0)")
        if self.focal_length <= 0 or self.person_height <= 0:
            raise SceneConfigError("focal_length and person_height must be positive")
        for reg in self.brightness_regions:
            if not 0 < reg.factor <= 1:
                raise SceneConfigError("brightness factors must be in (0, 1]")
        if self.light_direction is not None and self.light_direction[1] == 0:
            raise SceneConfigError("light direction must have a vertical component")

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0


@dataclass
class SpriteTruth:
    """Exact per-sprite ground truth for one rendered frame."""

    track_index: int
    class_name: str
    mask: np.ndarray
    visibility_mask: np.ndarray
    shadow_footprint_mask: np.ndarray
    shadow_visible_mask: np.ndarray
    bottom_x: float
    bottom_y: float
    pixel_height: float
    lighting_factor: float
    world_z: float
    drawn_color: tuple[int, int, int]


@dataclass
class GroundTruthFrame:
    index: int
    pixels: np.ndarray
    sprites: list[SpriteTruth]


def ground_y(config: SynthConfig, x: float, z: float) -> float:
    a, b, c = config.ground_plane
    return (1.0 - a * x - c * z) / b


def plane_pixel_coefficients(config: SynthConfig) -> tuple[float, float, float]:
    """Exact (x_coeff, y_coeff, offset) of the pixel-space height law."""
    a, b, c = config.ground_plane
    f, s = config.focal_length, config.person_height
    x_coeff = a * s
    y_coeff = b * s
    offset = c * f * s - x_coeff * config.cx - y_coeff * config.cy
    return x_coeff, y_coeff, offset


def shear_from_light(direction: tuple[float, float, float]) -> tuple[float, float]:
    """Image-space shadow shear implied by a light direction vector."""
    dx, dy, dz = direction
    if dy == 0:
        raise SceneConfigError("light direction must have a vertical component")
    return -dx / dy, -dz / dy


def track_height(config: SynthConfig, track_index: int) -> float:
    """World height of one sprite track, with per-track multiplicative noise."""
    track = config.sprites[track_index]
    base = config.person_height * track.height_multiplier
    if config.height_noise_sigma > 0:
        rng = np.random.default_rng((config.seed, track_index))
        base *= max(0.5, 1.0 + config.height_noise_sigma * rng.standard_normal())
    return base


def silhouette(shape: str, width_px: int, height_px: int) -> np.ndarray:
    """Local boolean silhouette raster, row 0 at the top."""
    ys = (height_px - 1 - np.arange(height_px)).astype(np.float64)[:, None]
    xs = np.arange(width_px, dtype=np.float64)[None, :]
    if shape == "box":
        return np.ones((height_px, width_px), dtype=bool)
    if shape == "person":
        body = ys < 0.78 * height_px
        head_r = max(1.0, min(0.125 * height_px, 0.5 * width_px))
        head = ((xs - (width_px - 1) / 2.0) ** 2
                + (ys - 0.875 * height_px) ** 2) <= head_r ** 2
        return body | head
    raise SceneConfigError(f"unknown sprite shape {shape!r}")


def _brightness_image(config: SynthConfig) -> np.ndarray:
    fac = np.ones((config.height, config.width), dtype=np.float64)
    for reg in config.brightness_regions:
        r0 = config.height - reg.y1
        r1 = config.height - reg.y0
        fac[max(0, r0):max(0, r1), max(0, reg.x0):max(0, reg.x1)] = reg.factor
    return fac


def _stamp_box(canvas_shape: tuple[int, int], local: np.ndarray,
               top_row: int, left_col: int) -> np.ndarray:
    """Place a local boolean raster onto a full canvas, clipping at edges."""
    height, width = canvas_shape
    out = np.zeros(canvas_shape, dtype=bool)
    h, w = local.shape
    r0, c0 = max(0, top_row), max(0, left_col)
    r1, c1 = min(height, top_row + h), min(width, left_col + w)
    if r1 > r0 and c1 > c0:
        out[r0:r1, c0:c1] = local[r0 - top_row:r1 - top_row, c0 - left_col:c1 - left_col]
    return out


@dataclass
class _Projected:
    mask: np.ndarray
    bottom_x: float
    bottom_y: float
    pixel_height: float
    bottom_y_int: int


def _project_silhouette(config: SynthConfig, x: float, z: float,
                        world_height: float, shape: str,
                        width_ratio: float) -> _Projected:
    if z <= 0:
        raise SceneConfigError(f"sprite at depth {z} is behind the camera")
    y_world = ground_y(config, x, z)
    f = config.focal_length
    xb = config.cx + f * x / z
    yb = config.cy + f * y_world / z
    h_true = world_height * f / z
    w_true = world_height * width_ratio * f / z
    y0i = int(math.floor(yb + 0.5))
    h_i = max(1, int(math.floor(h_true + 0.5)))
    w_i = max(1, int(math.floor(w_true + 0.5)))
    x_ci = int(math.floor(xb + 0.5))
    local = silhouette(shape, w_i, h_i)
    bottom_row = config.height - 1 - y0i
    mask = _stamp_box((config.height, config.width), local,
                      bottom_row - (h_i - 1), x_ci - w_i // 2)
    return _Projected(mask, xb, yb, h_true, y0i)


def project_sprite(config: SynthConfig, x: float, z: float,
                   world_height: float, shape: str = "person",
                   width_ratio: float = 0.35) -> SpriteTruth:
    """Silhouette and physical visibility for a hypothetical sprite.

    Visibility accounts for configured occluder boxes nearer than z; used
    as the rendering-side oracle for insertion tests.
    """
    proj = _project_silhouette(config, x, z, world_height, shape, width_ratio)
    visible = proj.mask.copy()
    for box in config.occluders:
        if box.z < z:
            visible &= ~_occluder_mask(config, box)
    fac = _brightness_image(config)
    lf = _factor_at(fac, config, proj.bottom_x, proj.bottom_y)
    return SpriteTruth(-1, "person", proj.mask, visible,
                       np.zeros_like(proj.mask), np.zeros_like(proj.mask),
                       proj.bottom_x, proj.bottom_y, proj.pixel_height,
                       lf, z, (0, 0, 0))


def _occluder_mask(config: SynthConfig, box: OccluderBox) -> np.ndarray:
    f = config.focal_length
    h_px = box.height * f / box.z
    xl = config.cx + f * box.x_min / box.z
    xr = config.cx + f * box.x_max / box.z
    yl = config.cy + f * ground_y(config, box.x_min, box.z) / box.z
    yr = config.cy + f * ground_y(config, box.x_max, box.z) / box.z
    c0 = int(math.floor(xl + 0.5))
    c1 = int(math.floor(xr + 0.5))
    out = np.zeros((config.height, config.width), dtype=bool)
    if c1 < c0:
        c0, c1 = c1, c0
        yl, yr = yr, yl
    for c in range(max(0, c0), min(config.width, c1 + 1)):
        t = 0.0 if c1 == c0 else (c - c0) / (c1 - c0)
        yb = yl + t * (yr - yl)
        y0 = int(math.floor(yb + 0.5))
        y1 = y0 + max(1, int(math.floor(h_px + 0.5))) - 1
        r0 = config.height - 1 - min(y1, config.height - 1)
        r1 = config.height - 1 - max(y0, 0)
        if r1 >= r0:
            out[max(0, r0):r1 + 1, c] = True
    return out


def _factor_at(fac: np.ndarray, config: SynthConfig, x: float, y: float) -> float:
    r = config.height - 1 - int(math.floor(y + 0.5))
    c = int(math.floor(x + 0.5))
    r = min(max(r, 0), config.height - 1)
    c = min(max(c, 0), config.width - 1)
    return float(fac[r, c])


def _active_position(track: SpriteTrack, t: int):
    i = t - track.start_frame
    if 0 <= i < len(track.positions):
        return track.positions[i]
    return None


def render_frame(config: SynthConfig, t: int) -> GroundTruthFrame:
    """Render frame t with exact per-sprite ground truth."""
    height, width = config.height, config.width
    fac = _brightness_image(config)
    base = np.clip(np.floor(np.asarray(config.background_color, dtype=np.float64)
                            * fac[..., None] + 0.5), 0, 255).astype(np.uint8)

    entities = []  # (z, kind, payload)
    truths: list[SpriteTruth] = []
    for idx, track in enumerate(config.sprites):
        pos = _active_position(track, t)
        if pos is None:
            continue
        if len(pos) == 3:
            x, y_w, z = pos
            a, b, c = config.ground_plane
            if abs(a * x + b * y_w + c * z - 1.0) > 1e-6:
                raise SceneConfigError(
                    f"sprite {idx} at frame {t} is off the ground plane")
        else:
            x, z = pos
        world_h = track_height(config, idx)
        proj = _project_silhouette(config, x, z, world_h, track.shape,
                                   track.width_ratio)
        lf = _factor_at(fac, config, proj.bottom_x, proj.bottom_y)
        color = tuple(int(min(255, math.floor(ch * lf + 0.5)))
                      for ch in track.albedo)
        truth = SpriteTruth(idx, track.class_name, proj.mask,
                            np.zeros_like(proj.mask), np.zeros_like(proj.mask),
                            np.zeros_like(proj.mask), proj.bottom_x,
                            proj.bottom_y, proj.pixel_height, lf, z, color)
        truths.append(truth)
        entities.append((z, "sprite", (truth, color)))
    for box in config.occluders:
        entities.append((box.z, "box", box))

    # cast shadows onto the base before any occupant is drawn
    if config.light_direction is not None:
        kx, ky = shear_from_light(config.light_direction)
        darkened = np.zeros((height, width), dtype=bool)
        for truth in truths:
            rows, cols = np.nonzero(truth.mask)
            if rows.size == 0:
                continue
            yb = float(math.floor(truth.bottom_y + 0.5))
            d = (height - 1 - rows).astype(np.float64) - yb
            tc = np.floor(cols + kx * d + 0.5).astype(np.int64)
            ty = np.floor(yb + ky * d + 0.5).astype(np.int64)
            tr = height - 1 - ty
            ok = (tr >= 0) & (tr < height) & (tc >= 0) & (tc < width)
            footprint = np.zeros((height, width), dtype=bool)
            footprint[tr[ok], tc[ok]] = True
            truth.shadow_footprint_mask = footprint
            applied = footprint & ~darkened & (fac >= config.dark_region_cutoff)
            base[applied] = np.clip(
                np.floor(base[applied].astype(np.float64) * config.shadow_gain + 0.5),
                0, 255).astype(np.uint8)
            darkened |= applied
            truth.shadow_visible_mask = applied

    # painter's draw, far to near
    id_buffer = np.full((height, width), -1, dtype=np.int32)
    order = sorted(range(len(entities)), key=lambda i: -entities[i][0])
    for ent_id in order:
        _, kind, payload = entities[ent_id]
        if kind == "sprite":
            truth, color = payload
            base[truth.mask] = color
            id_buffer[truth.mask] = ent_id
        else:
            box_mask = _occluder_mask(config, payload)
            shade = np.asarray(payload.color, dtype=np.float64) * fac[box_mask][:, None]
            base[box_mask] = np.clip(np.floor(shade + 0.5), 0, 255).astype(np.uint8)
            id_buffer[box_mask] = ent_id

    for ent_id, (_, kind, payload) in enumerate(entities):
        if kind == "sprite":
            truth, _ = payload
            truth.visibility_mask = truth.mask & (id_buffer == ent_id)
            truth.shadow_visible_mask = truth.shadow_visible_mask & (id_buffer == -1)

    return GroundTruthFrame(t, base, truths)


def demo_config(seed: int = 0, width: int = 320, height: int = 240,
                n_tracks: int = 120) -> SynthConfig:
    """A ready-made scene: walkers on a flat ground, one occluder, a shaded
    strip, and directional shadows. Good for CLI demos and smoke tests."""
    rng = np.random.default_rng(seed)
    f = 260.0
    plane = (0.0, -0.5, 0.0)  # flat ground 2 units below the camera
    tracks = []
    palette = rng.integers(70, 220, size=(n_tracks, 3))
    for i in range(n_tracks):
        z = float(rng.uniform(6.0, 16.0))
        x0 = float(rng.uniform(-0.55, 0.25) * z)
        step = float(rng.uniform(0.05, 0.12)) * z / 10.0
        length = int(rng.integers(8, 20))
        positions = tuple((x0 + k * step, z) for k in range(length))
        tracks.append(SpriteTrack(
            start_frame=int(rng.integers(0, 140)), positions=positions,
            albedo=tuple(int(v) for v in palette[i]),
            height_multiplier=float(rng.uniform(0.9, 1.1))))
    occ = OccluderBox(x_min=0.5, x_max=2.4, z=8.0, height=1.1)
    shade = BrightnessRegion(0, 0, width // 3, height, 0.45)
    return SynthConfig(
        width=width, height=height, focal_length=f, ground_plane=plane,
        person_height=1.7, occluders=(occ,),
        light_direction=(0.7, -1.0, 0.05), shadow_gain=0.55,
        brightness_regions=(shade,), sprites=tuple(tracks), seed=seed,
        height_noise_sigma=0.05)


def export_scene(config: SynthConfig, n_frames: int, out_dir: str | Path,
                 split_fraction: float = 0.95) -> SceneManifest:
    """Write frames, per-frame detection masks, scene.json and truth.json."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    for t in range(n_frames):
        gt = render_frame(config, t)
        save_image(out / "frames" / f"{t:06d}.png", gt.pixels)
        lines = []
        for truth in gt.sprites:
            if not truth.visibility_mask.any():
                continue
            runs = encode_mask(BitMask(config.width, config.height,
                                       truth.visibility_mask))
            lines.append(json.dumps({
                "class_name": truth.class_name,
                "confidence": 1.0,
                "runs": runs,
            }))
        (out / "masks" / f"{t:06d}.jsonl").write_text(
            "\n".join(lines) + ("\n" if lines else ""))

    manifest = SceneManifest(
        width=config.width, height=config.height, fps=config.fps,
        frame_count=n_frames,
        frame_path_pattern="frames/{frame:06d}.png",
        mask_path_pattern="masks/{frame:06d}.jsonl",
        split_fraction=split_fraction, root=out,
    )
    (out / "scene.json").write_text(
        json.dumps(manifest_to_dict(manifest), indent=2, sort_keys=True) + "\n")

    x_coeff, y_coeff, offset = plane_pixel_coefficients(config)
    truth_doc = {
        "plane": {"x_coeff": x_coeff, "y_coeff": y_coeff, "offset": offset},
        "shadow": None,
        "brightness_regions": [
            {"x0": r.x0, "y0": r.y0, "x1": r.x1, "y1": r.y1, "factor": r.factor}
            for r in config.brightness_regions],
        "occluders": [
            {"x_min": b.x_min, "x_max": b.x_max, "z": b.z, "height": b.height}
            for b in config.occluders],
        "person_height": config.person_height,
        "focal_length": config.focal_length,
        "seed": config.seed,
        "height_noise_sigma": config.height_noise_sigma,
        "dark_region_cutoff": config.dark_region_cutoff,
        "track_heights": [track_height(config, i)
                          for i in range(len(config.sprites))],
    }
    if config.light_direction is not None:
        kx, ky = shear_from_light(config.light_direction)
        truth_doc["shadow"] = {"shear_x": kx, "shear_y": ky,
                               "gain": config.shadow_gain}
    (out / "truth.json").write_text(
        json.dumps(truth_doc, indent=2, sort_keys=True) + "\n")
    return manifest
