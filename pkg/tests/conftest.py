"""Shared synthetic scenes with analytic ground truth.

Scene fixtures are session-scoped: they are exported to disk once and
reused by module tests and the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from sceneprobe import synth
from sceneprobe.dataio import Scene


@dataclass
class SceneFixture:
    config: synth.SynthConfig
    manifest: object
    path: Path

    def scene(self) -> Scene:
        return Scene(self.manifest)


def _reject_sample(rng, config, zlo, zhi, xlo_px, xhi_px,
                   margin: float = 1.15):
    """Ground position whose sprite stays fully inside the frame."""
    f, w, h = config.focal_length, config.width, config.height
    for _ in range(500):
        z = float(rng.uniform(zlo, zhi))
        x_px = float(rng.uniform(xlo_px, xhi_px))
        x = (x_px - w / 2) * z / f
        y_px = h / 2 + f * synth.ground_y(config, x, z) / z
        sprite_h = config.person_height * f / z
        if 3 <= y_px and y_px + sprite_h * margin <= h - 4 \
                and 12 <= x_px <= w - 12:
            return x, z
    raise RuntimeError("could not sample an in-frame position")


# ---------------------------------------------------------------------------
# plane scene: 200+ person observations with 5% height noise


def plane_scene_config(seed: int = 2) -> synth.SynthConfig:
    base = synth.SynthConfig(
        width=320, height=240, focal_length=340.0,
        ground_plane=(0.1, -0.5, 0.12), person_height=1.7,
        light_direction=None, background_color=(10, 10, 10))
    rng = np.random.default_rng(seed)
    tracks = []
    for i in range(106):
        # each walker appears once near and once far, on opposite sides
        if rng.random() < 0.5:
            sides = ((25, 140), (180, 295))
        else:
            sides = ((180, 295), (25, 140))
        p1 = _reject_sample(rng, base, 6, 10, *sides[0])
        p2 = _reject_sample(rng, base, 15, 24, *sides[1])
        albedo = tuple(int(v) for v in rng.integers(60, 220, 3))
        tracks.append(synth.SpriteTrack(i % 103, (p1, p2), albedo))
    return synth.SynthConfig(
        width=320, height=240, focal_length=340.0,
        ground_plane=(0.1, -0.5, 0.12), person_height=1.7,
        light_direction=None, sprites=tuple(tracks), seed=seed,
        height_noise_sigma=0.05, background_color=(10, 10, 10))


PLANE_SCENE_FRAMES = 105


@pytest.fixture(scope="session")
def plane_scene(tmp_path_factory) -> SceneFixture:
    config = plane_scene_config()
    out = tmp_path_factory.mktemp("plane_scene")
    manifest = synth.export_scene(config, PLANE_SCENE_FRAMES, out)
    return SceneFixture(config, manifest, out)


# ---------------------------------------------------------------------------
# occlusion scene: 500+ probe frames, teleporting walkers, one occluder


def _probe_albedo(rng) -> tuple[int, int, int]:
    # channels far from both the background and the occluder colors so
    # refinement keeps whole silhouettes
    out = []
    for _ in range(3):
        if rng.random() < 0.5:
            out.append(int(rng.integers(40, 71)))
        else:
            out.append(int(rng.integers(170, 241)))
    return tuple(out)


OCCLUSION_SCENE_FRAMES = 530


def occlusion_scene_config(seed: int = 11) -> synth.SynthConfig:
    base = synth.SynthConfig(
        width=400, height=300, focal_length=560.0,
        ground_plane=(0.0, -0.5, 0.0), person_height=1.7,
        light_direction=None, background_color=(110, 120, 130))
    rng = np.random.default_rng(seed)
    f = base.focal_length
    tracks = []
    for t in range(OCCLUSION_SCENE_FRAMES):
        for _ in range(3):
            # bottoms sampled uniformly in image y so the occlusion map is
            # evenly informed at every depth
            for _attempt in range(100):
                y_px = float(rng.uniform(6.0, 92.0))
                z = f * 2.0 / (base.height / 2 - y_px)
                x_px = float(rng.uniform(18.0, 382.0))
                x = (x_px - base.width / 2) * z / f
                h = base.person_height * f / z
                if y_px + h * 1.15 <= base.height - 4:
                    break
            tracks.append(synth.SpriteTrack(t, ((x, z),), _probe_albedo(rng)))
    box = synth.OccluderBox(x_min=0.3, x_max=1.8, z=9.0, height=1.3,
                            color=(235, 10, 235))
    return synth.SynthConfig(
        width=400, height=300, focal_length=560.0,
        ground_plane=(0.0, -0.5, 0.0), person_height=1.7,
        occluders=(box,), light_direction=None,
        sprites=tuple(tracks), seed=seed,
        background_color=(110, 120, 130))


@pytest.fixture(scope="session")
def occlusion_scene(tmp_path_factory) -> SceneFixture:
    config = occlusion_scene_config()
    out = tmp_path_factory.mktemp("occlusion_scene")
    manifest = synth.export_scene(config, OCCLUSION_SCENE_FRAMES, out)
    return SceneFixture(config, manifest, out)


# ---------------------------------------------------------------------------
# lighting scene: two-region brightness field with i.i.d. gray walkers


LIGHTING_SCENE_FRAMES = 120
LIGHTING_DARK_FACTOR = 0.4


def lighting_scene_config(seed: int = 5) -> synth.SynthConfig:
    base = synth.SynthConfig(
        width=240, height=180, focal_length=260.0,
        ground_plane=(0.0, -0.5, 0.0), person_height=1.7,
        light_direction=None, background_color=(10, 10, 10))
    rng = np.random.default_rng(seed)
    tracks = []
    for t in range(LIGHTING_SCENE_FRAMES):
        for _ in range(3):
            pos = _reject_sample(rng, base, 6.0, 14.0, 16, 224)
            gray = int(rng.integers(90, 211))
            tracks.append(synth.SpriteTrack(t, (pos,), (gray, gray, gray)))
    dark = synth.BrightnessRegion(0, 0, 120, 180, LIGHTING_DARK_FACTOR)
    return synth.SynthConfig(
        width=240, height=180, focal_length=260.0,
        ground_plane=(0.0, -0.5, 0.0), person_height=1.7,
        light_direction=None, brightness_regions=(dark,),
        sprites=tuple(tracks), seed=seed, background_color=(10, 10, 10))


@pytest.fixture(scope="session")
def lighting_scene(tmp_path_factory) -> SceneFixture:
    config = lighting_scene_config()
    out = tmp_path_factory.mktemp("lighting_scene")
    manifest = synth.export_scene(config, LIGHTING_SCENE_FRAMES, out)
    return SceneFixture(config, manifest, out)


# ---------------------------------------------------------------------------
# shadow scene: directional shadows with known shear and gain


SHADOW_SCENE_FRAMES = 60
SHADOW_TRUE = (0.8, 0.1, 0.5)


def shadow_scene_config(seed: int = 9) -> synth.SynthConfig:
    base = synth.SynthConfig(
        width=240, height=180, focal_length=260.0,
        ground_plane=(0.0, -0.5, 0.0), person_height=1.7,
        light_direction=None, background_color=(200, 200, 210))
    rng = np.random.default_rng(seed)
    tracks = []
    for i in range(20):
        positions = tuple(_reject_sample(rng, base, 7.0, 13.0, 80, 185)
                          for _ in range(3))
        albedo = tuple(int(v) for v in rng.integers(40, 71, 3))
        tracks.append(synth.SpriteTrack(3 * i, positions, albedo))
    for i in range(6):
        # a few walkers inside the shaded strip so the lighting map is
        # defined there (their own shadows are suppressed by the shade)
        positions = tuple(_reject_sample(rng, base, 7.0, 13.0, 16, 50)
                          for _ in range(3))
        albedo = tuple(int(v) for v in rng.integers(40, 71, 3))
        tracks.append(synth.SpriteTrack(10 * i, positions, albedo))
    dark = synth.BrightnessRegion(0, 0, 60, 180, 0.4)
    return synth.SynthConfig(
        width=240, height=180, focal_length=260.0,
        ground_plane=(0.0, -0.5, 0.0), person_height=1.7,
        light_direction=(SHADOW_TRUE[0], -1.0, SHADOW_TRUE[1]),
        shadow_gain=SHADOW_TRUE[2], brightness_regions=(dark,),
        sprites=tuple(tracks), seed=seed, background_color=(200, 200, 210))


@pytest.fixture(scope="session")
def shadow_scene(tmp_path_factory) -> SceneFixture:
    config = shadow_scene_config()
    out = tmp_path_factory.mktemp("shadow_scene")
    manifest = synth.export_scene(config, SHADOW_SCENE_FRAMES, out)
    return SceneFixture(config, manifest, out)


# ---------------------------------------------------------------------------
# demo scene with all effects, plus built products (composer/service/CLI)


DEMO_SCENE_FRAMES = 110


def demo_scene_config(seed: int = 3) -> synth.SynthConfig:
    base = synth.SynthConfig(
        width=240, height=180, focal_length=260.0,
        ground_plane=(0.0, -0.5, 0.0), person_height=1.7,
        light_direction=None, background_color=(130, 140, 150))
    rng = np.random.default_rng(seed)
    tracks = []
    for t in range(DEMO_SCENE_FRAMES):
        for _ in range(2):
            pos = _reject_sample(rng, base, 6.0, 15.0, 30, 210)
            tracks.append(synth.SpriteTrack(t, (pos,), _probe_albedo(rng)))
    box = synth.OccluderBox(x_min=-1.8, x_max=-0.4, z=8.5, height=1.0,
                            color=(235, 10, 235))
    return synth.SynthConfig(
        width=240, height=180, focal_length=260.0,
        ground_plane=(0.0, -0.5, 0.0), person_height=1.7,
        occluders=(box,), light_direction=(0.6, -1.0, 0.05),
        shadow_gain=0.55, sprites=tuple(tracks), seed=seed,
        background_color=(130, 140, 150))


@pytest.fixture(scope="session")
def demo_scene(tmp_path_factory) -> SceneFixture:
    config = demo_scene_config()
    out = tmp_path_factory.mktemp("demo_scene")
    manifest = synth.export_scene(config, DEMO_SCENE_FRAMES, out)
    return SceneFixture(config, manifest, out)


@pytest.fixture(scope="session")
def demo_products(demo_scene):
    from sceneprobe import composer
    products = composer.build_products(demo_scene.scene())
    composer.save_products(products)
    return products


def make_sprite(height: int = 40, width: int = 16,
                color=(60, 200, 80)) -> tuple[np.ndarray, np.ndarray]:
    """A simple flat-color cut-out with a person-ish alpha silhouette."""
    mask = synth.silhouette("person", width, height)
    rgb = np.zeros((height, width, 3), dtype=np.uint8)
    rgb[mask] = color
    return rgb, mask
