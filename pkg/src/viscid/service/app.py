"""HTTP stepping service wrapping the core simulator.

Sessions are server-side :class:`~viscid.sim.Simulation` instances keyed by
id; clients (the CLI, the browser demo) drive them frame by frame through
JSON endpoints. One lock per session serializes stepping; independent
sessions run concurrently.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles

from ..errors import SceneError, ViscidError
from ..scene import builtin_scene_names, load_builtin_scene
from ..sim import Simulation
from ..unet import load_weights
from .models import (
    CreateSessionRequest,
    SessionInfo,
    SolverSwitchRequest,
    StepRequest,
    StepResponse,
    WeightsInfo,
)

MAX_SESSIONS = 32


class _Session:
    def __init__(self, sim: Simulation):
        self.sim = sim
        self.lock = threading.Lock()


def create_app(weights_dir=None, demo_dir=None) -> FastAPI:
    app = FastAPI(title="viscid", version="0.1.0")
    sessions: dict[str, _Session] = {}
    weights_path = Path(weights_dir) if weights_dir else None

    def _load_named_weights(name: str):
        if weights_path is None:
            raise HTTPException(status_code=400, detail="no weights directory configured")
        candidate = (weights_path / name).with_suffix(".vwnet")
        if not candidate.is_file():
            candidate = weights_path / name
        if not candidate.is_file() or not candidate.resolve().is_relative_to(
            weights_path.resolve()
        ):
            raise HTTPException(status_code=404, detail=f"unknown weights {name!r}")
        try:
            return load_weights(candidate)
        except ViscidError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    def _get(session_id: str) -> _Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def _info(session_id: str, session: _Session) -> SessionInfo:
        sim = session.sim
        return SessionInfo(
            session_id=session_id,
            scene_name=sim.scene.name,
            solver=sim.solver,
            frame=sim.frame,
            time=sim.time,
            particle_count=len(sim.particles),
            domain=sim.scene.domain,
            grid=sim.scene.grid,
            dt=sim.scene.dt,
            colors=sim.particles.color.tolist(),
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(sessions)}

    @app.get("/scenes")
    def scenes() -> list[str]:
        return builtin_scene_names()

    @app.get("/weights")
    def weights() -> list[WeightsInfo]:
        if weights_path is None or not weights_path.is_dir():
            return []
        out = []
        for p in sorted(weights_path.glob("*.vwnet")):
            try:
                m = load_weights(p)
            except ViscidError:
                continue
            out.append(
                WeightsInfo(
                    name=p.stem, depth=m.depth, in_channels=m.in_channels, widths=m.widths
                )
            )
        return out

    @app.post("/sessions", response_model=SessionInfo)
    def create_session(req: CreateSessionRequest):
        if (req.scene is None) == (req.scene_name is None):
            raise HTTPException(status_code=400, detail="give exactly one of scene, scene_name")
        if len(sessions) >= MAX_SESSIONS:
            raise HTTPException(status_code=429, detail="session limit reached")
        try:
            scene = req.scene if req.scene is not None else load_builtin_scene(req.scene_name)
        except SceneError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        manifest = None
        if req.solver == "neural":
            if req.weights_name is None:
                raise HTTPException(status_code=400, detail="neural solver needs weights_name")
            manifest = _load_named_weights(req.weights_name)
        try:
            sim = Simulation(scene, solver=req.solver, manifest=manifest)
        except (ViscidError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        session_id = uuid.uuid4().hex[:12]
        sessions[session_id] = _Session(sim)
        return _info(session_id, sessions[session_id])

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str):
        return _info(session_id, _get(session_id))

    @app.post("/sessions/{session_id}/step", response_model=StepResponse)
    def step(session_id: str, req: StepRequest):
        session = _get(session_id)
        pointer = None
        if req.pointer is not None:
            pointer = ((req.pointer.x, req.pointer.y), req.pointer.radius,
                       (req.pointer.vx, req.pointer.vy))
        with session.lock:
            sim = session.sim
            try:
                for _ in range(req.substeps):
                    diag = sim.step(pointer=pointer)
            except ViscidError as exc:
                raise HTTPException(status_code=500, detail=str(exc))
            return StepResponse(
                frame=sim.frame,
                time=sim.time,
                positions=[tuple(p) for p in sim.particles.positions],
                kinetic_energy=sim.kinetic_energy(),
                max_speed=diag.max_speed,
                timings_ms=diag.timings,
                total_ms=diag.total_ms,
                solver=sim.solver,
            )

    @app.post("/sessions/{session_id}/solver", response_model=SessionInfo)
    def switch_solver(session_id: str, req: SolverSwitchRequest):
        session = _get(session_id)
        with session.lock:
            manifest = None
            if req.solver == "neural" and req.weights_name is not None:
                manifest = _load_named_weights(req.weights_name)
            try:
                session.sim.set_solver(req.solver, manifest)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return _info(session_id, session)

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        _get(session_id)
        del sessions[session_id]
        return {"deleted": session_id}

    if demo_dir is not None and Path(demo_dir).is_dir():
        app.mount("/demo", StaticFiles(directory=demo_dir, html=True), name="demo")

    return app
