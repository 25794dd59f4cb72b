"""Full object insertion: scale, relight, occlusion composite, shadow.

build_products() runs every probe over a scene's training split once and
persists the results; place()/move()/render_composite() consume them.
Each pipeline stage can be toggled independently, so disabling all of them
reduces insertion to a raw paste.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .background import background_image, plate_for_frame
from .dataio import Scene, encode_png, load_image, manifest_to_dict
from .errors import (EmptyLightingMapError, PlaneFitError, ProbeError,
                     ShadowFitError)
from .groundplane import (PlaneModel, collect_height_samples, fit_plane,
                          predict_height, relative_rescale)
from .lighting import (LightingAnchor, LightingMap, build_lighting_map,
                       lighting_factor, lighting_map_from_bytes,
                       lighting_map_to_bytes, relight)
from .occlusion import (OcclusionMap, build_occlusion_map, composite_object,
                        observe_frame, occlusion_map_from_bytes,
                        occlusion_map_to_bytes)
from .shadow import (ShadowModel, combine_gains, contact_shadow_model,
                     extract_shadow_evidence, fit_shadow_model,
                     synthesize_gain_bias, apply_gain_bias)

PRODUCTS_FILE = "probe_products.json"


@dataclass(frozen=True)
class ProbeConfig:
    """Tunable thresholds for the probing pipeline."""

    tau: float = 30.0
    min_mask_area: int = 50
    probe_confidence: float = 0.75
    person_confidence: float = 0.9
    shadow_confidence: float = 0.8
    plate_seconds: float = 1.0
    shadow_window: int = 50
    min_shadow_observations: int = 10
    max_shadow_observations: int = 120
    lighting_cutoff: float = 0.6

    def to_dict(self) -> dict:
        return {
            "tau": self.tau, "min_mask_area": self.min_mask_area,
            "probe_confidence": self.probe_confidence,
            "person_confidence": self.person_confidence,
            "shadow_confidence": self.shadow_confidence,
            "plate_seconds": self.plate_seconds,
            "shadow_window": self.shadow_window,
            "min_shadow_observations": self.min_shadow_observations,
            "max_shadow_observations": self.max_shadow_observations,
            "lighting_cutoff": self.lighting_cutoff,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ProbeConfig":
        return cls(**raw)


@dataclass(frozen=True)
class Stages:
    """Pipeline stage toggles."""

    scale: bool = True
    lighting: bool = True
    occlusion: bool = True
    shadow: bool = True


ALL_STAGES = Stages()


@dataclass
class SceneProducts:
    """Everything inferred from one scene's training split."""

    manifest: object
    config: ProbeConfig
    background: np.ndarray
    occlusion: OcclusionMap
    lighting: LightingMap
    plane: PlaneModel | None
    shadow: ShadowModel | None
    errors: dict[str, str] = field(default_factory=dict)


@dataclass
class Placement:
    """An inserted cut-out and the state captured at its first placement."""

    sprite_id: str
    rgb: np.ndarray
    mask: np.ndarray
    anchor_x: float
    anchor_y: float
    height_override: float
    anchor_light: LightingAnchor | None
    ref_height: float
    x: float
    y: float
    brightness: float = 1.0


@dataclass
class CompositeResult:
    i_comp: np.ndarray
    i_final: np.ndarray
    timings: dict[str, float]


def collect_observations(scene: Scene, config: ProbeConfig | None = None,
                         gather_shadow_evidence: bool = True):
    """Observe every training frame; returns (observations, shadow evidence).

    Shadow evidence compares frames against a longer median plate, reused
    across a block of frames since the window slides slowly.
    """
    cfg = config or ProbeConfig()
    m = scene.manifest
    train = m.train_count
    window = max(1, int(round(m.fps * cfg.plate_seconds)))
    observations = []
    evidence = []
    shadow_plate = None
    shadow_block = -1
    for t in range(train):
        dets = scene.detections(t, cfg.probe_confidence)
        frame = scene.frame(t)
        plate = plate_for_frame(scene, t, window, frame_limit=train)
        obs = observe_frame(frame, dets, plate.pixels, cfg.tau, cfg.min_mask_area)
        observations.extend(obs)
        if not gather_shadow_evidence:
            continue
        shadow_obs = [o for o in obs if o.confidence >= cfg.shadow_confidence]
        if not shadow_obs:
            continue
        block = t // cfg.shadow_window
        if block != shadow_block:
            center = min(block * cfg.shadow_window + cfg.shadow_window // 2,
                         train - 1)
            shadow_plate = plate_for_frame(scene, center, cfg.shadow_window,
                                           frame_limit=train)
            shadow_block = block
        exclude = np.zeros((m.height, m.width), dtype=bool)
        for det in dets:
            exclude |= det.mask.pixels
        bottoms = np.array([(o.bottom_x, o.bottom_y) for o in shadow_obs])
        for i, o in enumerate(shadow_obs):
            others = np.delete(bottoms, i, axis=0) if len(shadow_obs) > 1 else None
            evidence.append(extract_shadow_evidence(
                frame, shadow_plate.pixels, o, exclude, others))
    return observations, evidence


def build_products(scene: Scene, config: ProbeConfig | None = None) -> SceneProducts:
    """Run all probes over the training split.

    A failed ground-plane or shadow fit is recorded in .errors and leaves
    the other products intact.
    """
    cfg = config or ProbeConfig()
    m = scene.manifest
    observations, evidence = collect_observations(scene, cfg)

    errors: dict[str, str] = {}
    occ = build_occlusion_map(observations, m.width, m.height)
    lmap = build_lighting_map(observations, m.width, m.height)

    plane = None
    try:
        plane = fit_plane(collect_height_samples(
            observations, min_confidence=cfg.person_confidence))
    except PlaneFitError as exc:
        errors["groundplane"] = str(exc)

    capped = evidence[:cfg.max_shadow_observations]
    try:
        shadow_model = fit_shadow_model(capped, cfg.min_shadow_observations,
                                        cfg.lighting_cutoff)
    except ShadowFitError as exc:
        shadow_model = contact_shadow_model(capped, cfg.lighting_cutoff)
        errors["shadow"] = f"directional fit unavailable ({exc}); contact mode"

    bg = background_image(scene, cfg.probe_confidence)
    return SceneProducts(m, cfg, bg, occ, lmap, plane, shadow_model, errors)


# ---------------------------------------------------------------------------
# sprite geometry helpers


def crop_to_mask(rgb: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise ProbeError("sprite mask is empty")
    r0, r1 = rows.min(), rows.max() + 1
    c0, c1 = cols.min(), cols.max() + 1
    return rgb[r0:r1, c0:c1].copy(), mask[r0:r1, c0:c1].copy()


def resize_sprite(rgb: np.ndarray, mask: np.ndarray,
                  scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Aspect-preserving bilinear resize; mask re-thresholded at 0.5."""
    if scale == 1.0:
        return rgb, mask
    h, w = mask.shape
    nh = max(1, int(round(h * scale)))
    nw = max(1, int(round(w * scale)))
    rgb2 = np.asarray(Image.fromarray(rgb).resize((nw, nh), Image.BILINEAR))
    m = Image.fromarray((mask * 255).astype(np.uint8)).resize((nw, nh),
                                                              Image.BILINEAR)
    return rgb2.copy(), np.asarray(m, dtype=np.float32) >= 127.5


def stamp_sprite(canvas_shape: tuple[int, int], rgb: np.ndarray,
                 mask: np.ndarray, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
    """Place a cut-out so its mask's bottom middle sits at (x, y); clips at
    image borders."""
    height, width = canvas_shape
    h, w = mask.shape
    y_int = int(round(y))
    bottom_row = height - 1 - y_int
    top = bottom_row - (h - 1)
    left = int(round(x)) - w // 2
    sprite_c = np.zeros((height, width, 3), dtype=np.uint8)
    mask_c = np.zeros((height, width), dtype=bool)
    r0, c0 = max(0, top), max(0, left)
    r1, c1 = min(height, top + h), min(width, left + w)
    if r1 > r0 and c1 > c0:
        sprite_c[r0:r1, c0:c1] = rgb[r0 - top:r1 - top, c0 - left:c1 - left]
        mask_c[r0:r1, c0:c1] = mask[r0 - top:r1 - top, c0 - left:c1 - left]
    return sprite_c, mask_c


def _prepare_canvases(products: SceneProducts, placement: Placement,
                      stages: Stages, timings: dict[str, float]):
    """Scale and relight one placement and stamp it onto full canvases."""
    rgb, mask = placement.rgb, placement.mask
    t0 = time.perf_counter()
    if stages.scale:
        if products.plane is None:
            raise PlaneFitError("no ground-plane model; disable the scale stage "
                                "or rebuild products with person observations")
        scale = placement.ref_height * relative_rescale(
            products.plane, (placement.anchor_x, placement.anchor_y),
            placement.ref_height, (placement.x, placement.y)) / mask.shape[0]
        rgb, mask = resize_sprite(rgb, mask, scale)
    timings["scale"] = timings.get("scale", 0.0) + time.perf_counter() - t0

    sprite_c, mask_c = stamp_sprite(
        (products.manifest.height, products.manifest.width),
        rgb, mask, placement.x, placement.y)

    t0 = time.perf_counter()
    if stages.lighting and placement.anchor_light is not None and mask_c.any():
        try:
            target = lighting_factor(products.lighting, mask_c)
        except EmptyLightingMapError:
            target = None
        if target is not None:
            sprite_c = relight(sprite_c, placement.anchor_light,
                               target * placement.brightness)
    timings["lighting"] = timings.get("lighting", 0.0) + time.perf_counter() - t0
    return sprite_c, mask_c, int(round(placement.y))


def _compose(products: SceneProducts, placements: list[Placement],
             stages: Stages) -> CompositeResult:
    timings: dict[str, float] = {}
    total0 = time.perf_counter()
    i_comp = products.background.copy()
    height, width = i_comp.shape[:2]
    order = sorted(placements, key=lambda p: -round(p.y))
    gains = []
    for placement in order:
        sprite_c, mask_c, y_int = _prepare_canvases(products, placement,
                                                    stages, timings)
        t0 = time.perf_counter()
        occ = products.occlusion if stages.occlusion else None
        i_comp = composite_object(i_comp, sprite_c, mask_c, y_int, occ)
        timings["occlusion"] = timings.get("occlusion", 0.0) + time.perf_counter() - t0
        if stages.shadow and products.shadow is not None:
            t0 = time.perf_counter()
            gains.append(synthesize_gain_bias(products.shadow, mask_c, y_int,
                                              products.lighting, occ))
            timings["shadow"] = timings.get("shadow", 0.0) + time.perf_counter() - t0
    if gains:
        t0 = time.perf_counter()
        combined = combine_gains(gains, height, width)
        i_final = apply_gain_bias(i_comp, combined)
        timings["shadow"] = timings.get("shadow", 0.0) + time.perf_counter() - t0
    else:
        i_final = i_comp.copy()
    timings["total"] = time.perf_counter() - total0
    return CompositeResult(i_comp, i_final, timings)


def place(products: SceneProducts, sprite_rgb: np.ndarray,
          sprite_mask: np.ndarray, x: float, y: float,
          height_override: float = 1.0, stages: Stages = ALL_STAGES,
          sprite_id: str = "sprite") -> tuple[Placement, CompositeResult]:
    """Insert a cut-out with its bottom middle at (x, y), bottom-left origin."""
    if height_override <= 0:
        raise ProbeError("height override must be positive")
    rgb, mask = crop_to_mask(sprite_rgb, sprite_mask)
    if stages.scale:
        if products.plane is None:
            raise PlaneFitError("no ground-plane model; disable the scale stage "
                                "or rebuild products with person observations")
        ref_height = predict_height(products.plane, x, y) * height_override
    else:
        ref_height = float(mask.shape[0])

    # capture the brightness anchor from the initially placed mask
    scale = ref_height / mask.shape[0] if stages.scale else 1.0
    rgb0, mask0 = resize_sprite(rgb, mask, scale)
    _, mask_c = stamp_sprite((products.manifest.height, products.manifest.width),
                             rgb0, mask0, x, y)
    anchor_light = None
    if mask_c.any():
        try:
            factor = lighting_factor(products.lighting, mask_c)
            if min(factor) > 0:
                anchor_light = LightingAnchor(tuple(float(v) for v in factor))
        except EmptyLightingMapError:
            pass

    placement = Placement(sprite_id, rgb, mask, x, y, height_override,
                          anchor_light, ref_height, x, y)
    return placement, _compose(products, [placement], stages)


def move(products: SceneProducts, placement: Placement, x: float, y: float,
         stages: Stages = ALL_STAGES) -> CompositeResult:
    """Re-render at a new position; anchor and override stay fixed."""
    if stages.scale:
        if products.plane is None:
            raise PlaneFitError("no ground-plane model")
        predict_height(products.plane, x, y)  # raises off-plane before mutating
    placement.x = x
    placement.y = y
    return _compose(products, [placement], stages)


def set_height_override(products: SceneProducts, placement: Placement,
                        value: float) -> None:
    """Adjust a placement's height factor; the reference height follows."""
    if value <= 0:
        raise ProbeError("height override must be positive")
    placement.height_override = value
    if products.plane is not None:
        placement.ref_height = predict_height(
            products.plane, placement.anchor_x, placement.anchor_y) * value
    else:
        placement.ref_height = float(placement.mask.shape[0]) * value


def set_brightness(placement: Placement, value: float) -> None:
    """Adjust a placement's overall brightness multiplier."""
    if value <= 0:
        raise ProbeError("brightness must be positive")
    placement.brightness = value


def render_composite(products: SceneProducts, placements: list[Placement],
                     stages: Stages = ALL_STAGES) -> np.ndarray:
    """Composite all placements, farthest first, shadows combined by min-gain."""
    return _compose(products, placements, stages).i_final


# ---------------------------------------------------------------------------
# persistence


def _plane_to_dict(plane: PlaneModel | None):
    if plane is None:
        return None
    return {"x_coeff": plane.x_coeff, "y_coeff": plane.y_coeff,
            "offset": plane.offset, "n_samples": plane.n_samples,
            "rms_residual": plane.rms_residual, "condition": plane.condition}


def _shadow_to_dict(model: ShadowModel | None):
    if model is None:
        return None
    return {"shear_x": model.shear_x, "shear_y": model.shear_y,
            "gain": model.gain, "lighting_cutoff": model.lighting_cutoff,
            "mode": model.mode, "n_observations": model.n_observations,
            "mean_iou": model.mean_iou, "iou_std": model.iou_std}


def save_products(products: SceneProducts, out_dir: str | Path | None = None) -> Path:
    """Write probe_products.json plus the binary maps and background plate."""
    out = Path(out_dir) if out_dir is not None else products.manifest.root
    out.mkdir(parents=True, exist_ok=True)
    (out / "background.png").write_bytes(encode_png(products.background))
    (out / "occlusion.bin").write_bytes(occlusion_map_to_bytes(products.occlusion))
    (out / "lighting.bin").write_bytes(lighting_map_to_bytes(products.lighting))
    doc = {
        "scene": manifest_to_dict(products.manifest),
        "config": products.config.to_dict(),
        "plane": _plane_to_dict(products.plane),
        "shadow": _shadow_to_dict(products.shadow),
        "errors": products.errors,
        "files": {"background": "background.png",
                  "occlusion": "occlusion.bin",
                  "lighting": "lighting.bin"},
    }
    (out / PRODUCTS_FILE).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return out / PRODUCTS_FILE


def load_products(scene_dir: str | Path) -> SceneProducts:
    """Load products persisted by save_products (FileNotFoundError if absent)."""
    scene_dir = Path(scene_dir)
    doc_path = scene_dir / PRODUCTS_FILE
    if not doc_path.is_file():
        raise FileNotFoundError(f"products not built: {doc_path}")
    doc = json.loads(doc_path.read_text())
    scene = Scene.open(scene_dir)
    background = load_image(scene_dir / doc["files"]["background"])
    occ = occlusion_map_from_bytes((scene_dir / doc["files"]["occlusion"]).read_bytes())
    lmap = lighting_map_from_bytes((scene_dir / doc["files"]["lighting"]).read_bytes())
    plane = None
    if doc["plane"] is not None:
        plane = PlaneModel(**doc["plane"])
    shadow_model = None
    if doc["shadow"] is not None:
        shadow_model = ShadowModel(**doc["shadow"])
    return SceneProducts(scene.manifest, ProbeConfig.from_dict(doc["config"]),
                         background, occ, lmap, plane, shadow_model,
                         dict(doc.get("errors", {})))
