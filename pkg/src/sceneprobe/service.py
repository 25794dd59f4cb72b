"""HTTP facade: scene products and interactive compositing sessions.

Sessions are in-memory with idle eviction; scene products are shared
read-only. Composite responses are PNG encoded by the same helper the CLI
uses, so identical inputs produce byte-identical images on both surfaces.
"""

from __future__ import annotations

import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import composer
from .dataio import encode_png, load_sprite
from .errors import OffPlaneError, PlaneFitError, ProbeError
from .lighting import lighting_viz
from .occlusion import occlusion_viz

DEFAULT_SESSION_TTL = 1800.0


@dataclass
class Session:
    session_id: str
    scene_id: str
    sprites: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    placements: dict[str, composer.Placement] = field(default_factory=dict)
    created: float = field(default_factory=time.time)
    last_touched: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)
    counter: int = 0

    def next_id(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"


def _parse_flag(value: str | None, default: bool = True) -> bool:
    if value is None:
        return default
    return value.strip().lower() not in ("0", "false", "no", "off")


def _png(data: np.ndarray, headers: dict | None = None) -> Response:
    return Response(content=encode_png(data), media_type="image/png",
                    headers=headers)


def _error(status: int, message: str, stage: str | None = None) -> JSONResponse:
    body = {"error": message}
    if stage:
        body["stage"] = stage
    return JSONResponse(body, status_code=status)


def create_app(scenes_root: str | Path,
               session_ttl: float | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    """Application serving every scene directory found under scenes_root."""
    root = Path(scenes_root)
    if session_ttl is None:
        session_ttl = float(os.environ.get("PROBE_SESSION_TTL",
                                           DEFAULT_SESSION_TTL))
    app = FastAPI(title="sceneprobe")
    scene_dirs = {p.parent.name: p.parent
                  for p in sorted(root.glob("*/scene.json"))}
    if (root / "scene.json").is_file():
        scene_dirs[root.name] = root
    products_cache: dict[str, composer.SceneProducts] = {}
    sessions: dict[str, Session] = {}
    state_lock = threading.Lock()

    def sweep(now: float) -> None:
        expired = [sid for sid, s in sessions.items()
                   if now - s.last_touched > session_ttl]
        for sid in expired:
            sessions.pop(sid, None)

    def get_products(scene_id: str) -> composer.SceneProducts:
        with state_lock:
            if scene_id in products_cache:
                return products_cache[scene_id]
        products = composer.load_products(scene_dirs[scene_id])
        with state_lock:
            products_cache[scene_id] = products
        return products

    def get_session(session_id: str) -> Session | None:
        with state_lock:
            sweep(time.time())
            session = sessions.get(session_id)
            if session is not None:
                session.last_touched = time.time()
            return session

    @app.get("/scenes")
    def list_scenes():
        out = []
        for scene_id, path in sorted(scene_dirs.items()):
            try:
                products = get_products(scene_id)
            except FileNotFoundError:
                from .dataio import load_manifest
                try:
                    m = load_manifest(path / "scene.json")
                except ProbeError:
                    continue  # unreadable scene directory: not served
                out.append({"id": scene_id, "width": m.width,
                            "height": m.height, "products_built": False})
                continue
            except ProbeError:
                continue
            out.append({"id": scene_id, "width": products.manifest.width,
                        "height": products.manifest.height,
                        "products_built": True})
        return out

    @app.get("/scenes/{scene_id}/background.png")
    def scene_background(scene_id: str):
        if scene_id not in scene_dirs:
            return _error(404, f"unknown scene {scene_id!r}")
        try:
            return _png(get_products(scene_id).background)
        except FileNotFoundError as exc:
            return _error(409, str(exc), "composer")

    @app.get("/scenes/{scene_id}/maps/{kind}.png")
    def scene_map(scene_id: str, kind: str):
        if scene_id not in scene_dirs:
            return _error(404, f"unknown scene {scene_id!r}")
        if kind not in ("occlusion", "lighting"):
            return _error(404, f"unknown map {kind!r}")
        try:
            products = get_products(scene_id)
        except FileNotFoundError as exc:
            return _error(409, str(exc), "composer")
        viz = (occlusion_viz(products.occlusion) if kind == "occlusion"
               else lighting_viz(products.lighting))
        return _png(viz)

    @app.post("/scenes/{scene_id}/sessions")
    def create_session(scene_id: str):
        if scene_id not in scene_dirs:
            return _error(404, f"unknown scene {scene_id!r}")
        try:
            get_products(scene_id)
        except FileNotFoundError as exc:
            return _error(409, str(exc), "composer")
        session = Session(uuid.uuid4().hex, scene_id)
        with state_lock:
            sweep(time.time())
            sessions[session.session_id] = session
        return {"session_id": session.session_id, "scene_id": scene_id}

    @app.post("/sessions/{session_id}/sprites")
    async def upload_sprite(session_id: str, request: Request):
        session = get_session(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id!r}")
        data = await request.body()
        try:
            rgb, mask = load_sprite(data)
        except Exception as exc:
            return _error(422, f"not a decodable image: {exc}", "dataio")
        if not mask.any():
            return _error(422, "sprite alpha mask is empty", "dataio")
        with session.lock:
            sprite_id = session.next_id("sprite-")
            session.sprites[sprite_id] = (rgb, mask)
        return {"sprite_id": sprite_id}

    def render_session(session: Session, stages: composer.Stages) -> Response:
        products = get_products(session.scene_id)
        image = composer.render_composite(
            products, list(session.placements.values()), stages)
        return _png(image)

    @app.post("/sessions/{session_id}/placements")
    async def add_placement(session_id: str, request: Request):
        session = get_session(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id!r}")
        body = await request.json()
        sprite_id = body.get("sprite_id")
        if sprite_id not in session.sprites:
            return _error(404, f"unknown sprite {sprite_id!r}")
        try:
            x = float(body["x"])
            y = float(body["y"])
            override = float(body.get("height_override", 1.0))
        except (KeyError, TypeError, ValueError):
            return _error(422, "placement needs numeric x and y", "composer")
        products = get_products(session.scene_id)
        rgb, mask = session.sprites[sprite_id]
        with session.lock:
            try:
                placement, _ = composer.place(products, rgb, mask, x, y,
                                              override, sprite_id=sprite_id)
            except OffPlaneError as exc:
                return _error(422, str(exc), exc.stage)
            except PlaneFitError as exc:
                return _error(409, str(exc), exc.stage)
            except ProbeError as exc:
                return _error(422, str(exc), exc.stage)
            placement_id = session.next_id("placement-")
            session.placements[placement_id] = placement
            response = render_session(session, composer.ALL_STAGES)
        response.headers["X-Placement-Id"] = placement_id
        return response

    @app.patch("/sessions/{session_id}/placements/{placement_id}")
    async def move_placement(session_id: str, placement_id: str,
                             request: Request):
        session = get_session(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id!r}")
        if placement_id not in session.placements:
            return _error(404, f"unknown placement {placement_id!r}")
        body = await request.json()
        products = get_products(session.scene_id)
        with session.lock:
            placement = session.placements[placement_id]
            try:
                if "height_override" in body:
                    composer.set_height_override(
                        products, placement, float(body["height_override"]))
                if "brightness" in body:
                    composer.set_brightness(placement,
                                            float(body["brightness"]))
                if "x" in body or "y" in body:
                    x = float(body.get("x", placement.x))
                    y = float(body.get("y", placement.y))
                    composer.move(products, placement, x, y)
            except OffPlaneError as exc:
                return _error(422, str(exc), exc.stage)
            except (ProbeError, TypeError, ValueError) as exc:
                stage = getattr(exc, "stage", "composer")
                return _error(422, str(exc), stage)
            return render_session(session, composer.ALL_STAGES)

    @app.delete("/sessions/{session_id}/placements/{placement_id}")
    def delete_placement(session_id: str, placement_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id!r}")
        with session.lock:
            if session.placements.pop(placement_id, None) is None:
                return _error(404, f"unknown placement {placement_id!r}")
        return Response(status_code=204)

    @app.get("/sessions/{session_id}/composite.png")
    def composite(session_id: str, shadow: str | None = None,
                  occlusion: str | None = None, lighting: str | None = None,
                  scale: str | None = None):
        session = get_session(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id!r}")
        stages = composer.Stages(scale=_parse_flag(scale),
                                 lighting=_parse_flag(lighting),
                                 occlusion=_parse_flag(occlusion),
                                 shadow=_parse_flag(shadow))
        with session.lock:
            return render_session(session, stages)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")

    return app
