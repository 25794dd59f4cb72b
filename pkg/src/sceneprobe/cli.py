"""probe: build scene products, inspect maps, insert cut-outs, serve HTTP."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import composer, kernels, synth
from .background import plate_for_frame
from .dataio import Scene, load_sprite, save_image
from .errors import ProbeError
from .groundplane import collect_height_samples, fit_plane
from .lighting import (build_lighting_map, lighting_map_to_bytes, lighting_viz)
from .occlusion import (build_occlusion_map, occlusion_map_to_bytes,
                        occlusion_viz)
from .shadow import contact_shadow_model, fit_shadow_model


def _open_scene(path: str) -> Scene:
    return Scene.open(path)


def cmd_plate(args) -> int:
    scene = _open_scene(args.scene)
    plate = plate_for_frame(scene, args.frame, args.window)
    save_image(args.out, plate.pixels)
    print(f"wrote {args.out} (frame {args.frame}, window {plate.window})")
    return 0


def cmd_occmap(args) -> int:
    scene = _open_scene(args.scene)
    cfg = composer.ProbeConfig()
    observations, _ = composer.collect_observations(scene, cfg, False)
    occ = build_occlusion_map(observations, scene.manifest.width,
                              scene.manifest.height)
    if args.out:
        Path(args.out).write_bytes(occlusion_map_to_bytes(occ))
        print(f"wrote {args.out}")
    if args.viz:
        save_image(args.viz, occlusion_viz(occ))
        print(f"wrote {args.viz}")
    covered = (occ.values >= 0).mean()
    print(f"{len(observations)} observations, {covered:.1%} of pixels covered")
    return 0


def cmd_lightmap(args) -> int:
    scene = _open_scene(args.scene)
    cfg = composer.ProbeConfig()
    observations, _ = composer.collect_observations(scene, cfg, False)
    lmap = build_lighting_map(observations, scene.manifest.width,
                              scene.manifest.height)
    if args.out:
        Path(args.out).write_bytes(lighting_map_to_bytes(lmap))
        print(f"wrote {args.out}")
    if args.viz:
        save_image(args.viz, lighting_viz(lmap))
        print(f"wrote {args.viz}")
    print(f"{len(observations)} observations, "
          f"{lmap.defined.mean():.1%} of pixels sampled")
    return 0


def _merge_into_products(scene_dir: Path, key: str, value: dict) -> None:
    path = scene_dir / composer.PRODUCTS_FILE
    if not path.is_file():
        print(f"note: {path} not present; run `probe build` to persist")
        return
    doc = json.loads(path.read_text())
    doc[key] = value
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"updated {key} in {path}")


def cmd_plane(args) -> int:
    scene = _open_scene(args.scene)
    cfg = composer.ProbeConfig()
    observations, _ = composer.collect_observations(scene, cfg, False)
    samples = collect_height_samples(observations,
                                     min_confidence=cfg.person_confidence)
    model = fit_plane(samples)
    print(f"height(x, y) = {model.x_coeff:.6f}*x + {model.y_coeff:.6f}*y "
          f"+ {model.offset:.3f}")
    print(f"samples={model.n_samples} rms_residual={model.rms_residual:.3f} "
          f"condition={model.condition:.2e}")
    _merge_into_products(Path(args.scene), "plane",
                         composer._plane_to_dict(model))
    return 0


def cmd_shadowfit(args) -> int:
    scene = _open_scene(args.scene)
    cfg = composer.ProbeConfig()
    _, evidence = composer.collect_observations(scene, cfg, True)
    capped = evidence[:cfg.max_shadow_observations]
    try:
        model = fit_shadow_model(capped, cfg.min_shadow_observations,
                                 cfg.lighting_cutoff)
    except ProbeError as exc:
        print(f"directional fit unavailable ({exc}); contact mode")
        model = contact_shadow_model(capped, cfg.lighting_cutoff)
    print(f"mode={model.mode} shear_x={model.shear_x:.2f} "
          f"shear_y={model.shear_y:.2f} gain={model.gain:.3f}")
    if model.mode == "directional":
        print(f"observations={model.n_observations} "
              f"mean_iou={model.mean_iou:.3f} iou_std={model.iou_std:.3f}")
    _merge_into_products(Path(args.scene), "shadow",
                         composer._shadow_to_dict(model))
    return 0


def cmd_build(args) -> int:
    scene = _open_scene(args.scene)
    products = composer.build_products(scene)
    out = composer.save_products(products, args.out)
    print(f"wrote {out}")
    print(f"occlusion coverage: {(products.occlusion.values >= 0).mean():.1%}")
    print(f"lighting coverage:  {products.lighting.defined.mean():.1%}")
    if products.plane is not None:
        print(f"plane: {products.plane.x_coeff:.6f}*x "
              f"+ {products.plane.y_coeff:.6f}*y + {products.plane.offset:.3f}")
    if products.shadow is not None:
        print(f"shadow: mode={products.shadow.mode} "
              f"gain={products.shadow.gain:.3f} "
              f"shear=({products.shadow.shear_x:.2f}, "
              f"{products.shadow.shear_y:.2f})")
    for stage, message in sorted(products.errors.items()):
        print(f"warning [{stage}]: {message}")
    return 0


def cmd_insert(args) -> int:
    products = composer.load_products(args.scene)
    rgb, mask = load_sprite(args.sprite)
    stages = composer.Stages(scale=not args.no_scale,
                             lighting=not args.no_lighting,
                             occlusion=not args.no_occlusion,
                             shadow=not args.no_shadow)
    _, result = composer.place(products, rgb, mask, args.x, args.y,
                               args.height_scale, stages)
    save_image(args.out, result.i_final)
    ms = result.timings.get("total", 0.0) * 1000
    print(f"wrote {args.out} ({ms:.1f} ms)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    port = args.port if args.port is not None else int(
        os.environ.get("PROBE_PORT", 8000))
    app = create_app(args.scenes, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=port)
    return 0


def cmd_synth(args) -> int:
    config = synth.demo_config(seed=args.seed)
    manifest = synth.export_scene(config, args.frames, args.out)
    print(f"wrote {args.out}: {manifest.frame_count} frames "
          f"{manifest.width}x{manifest.height}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probe",
        description="Scene probing and geometry/lighting-aware compositing "
                    f"(kernel backend: {kernels.ACTIVE_BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plate", help="median background plate for one frame")
    p.add_argument("--scene", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plate)

    p = sub.add_parser("occmap", help="accumulate the occlusion map")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", help="binary map output (little-endian i16 grid)")
    p.add_argument("--viz", help="pseudocolor PNG output")
    p.set_defaults(func=cmd_occmap)

    p = sub.add_parser("lightmap", help="accumulate the lighting map")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", help="binary map output (f32 sums + u32 counts)")
    p.add_argument("--viz", help="mean-color PNG output")
    p.set_defaults(func=cmd_lightmap)

    p = sub.add_parser("plane", help="fit the ground-plane height model")
    p.add_argument("--scene", required=True)
    p.set_defaults(func=cmd_plane)

    p = sub.add_parser("shadowfit", help="fit the cast-shadow model")
    p.add_argument("--scene", required=True)
    p.set_defaults(func=cmd_shadowfit)

    p = sub.add_parser("build", help="run all probes and persist products")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", help="output directory (default: scene dir)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("insert", help="composite a cut-out into the scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--sprite", required=True, help="RGBA PNG cut-out")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True,
                   help="bottom-left-origin y of the ground contact")
    p.add_argument("--height-scale", type=float, default=1.0)
    p.add_argument("--no-scale", action="store_true")
    p.add_argument("--no-lighting", action="store_true")
    p.add_argument("--no-occlusion", action="store_true")
    p.add_argument("--no-shadow", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_insert)

    p = sub.add_parser("serve", help="HTTP service over built scenes")
    p.add_argument("--scenes", required=True,
                   help="directory of scene directories (or one scene)")
    p.add_argument("--port", type=int, default=None,
                   help="default: $PROBE_PORT or 8000")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", help="static frontend directory to mount at /ui")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="generate a synthetic demo scene")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=160)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProbeError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
