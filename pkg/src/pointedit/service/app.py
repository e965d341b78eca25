"""FastAPI service exposing sessions, edits, history, and shape registries.

The loaded model is shared read-only across sessions; edits within one
session are serialized by a per-session lock, and a busy session answers
503 with Retry-After rather than queueing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

import base64

from ..cloud import CloudError, cloud_from_pc6_bytes
from ..denoiser import ModelError
from ..diffusion import SamplerConfig, ScheduleError
from ..mesh import sample_surface
from ..pipeline import (
    LoadedModel,
    PipelineError,
    SessionStore,
    cloud_to_wire,
    session_edit,
    wire_to_cloud,
)
from ..shapes import ParamVector, ShapeError, default_params, generate_mesh, param_registry
from .schemas import (
    CloudWire,
    CreateSessionRequest,
    CreateSessionResponse,
    EditRequest,
    EditResponse,
    HealthResponse,
    HistoryEntryModel,
    HistoryResponse,
    ParamRegistryResponse,
    ParamSpecModel,
    UndoResponse,
)

PREVIEW_POINTS = 1024


def _error(status: int, message: str, headers: dict | None = None) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message}, headers=headers)


def create_app(lm: LoadedModel, store: SessionStore | None = None,
               preview_points: int = PREVIEW_POINTS,
               studio_dir: str | Path | None = None) -> FastAPI:
    store = store or SessionStore()
    app = FastAPI(title="pointedit", version="0.1.0")
    app.state.model = lm
    app.state.store = store

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        # malformed bodies answer 400 with the offending field path
        detail = [{"loc": list(e.get("loc", ())), "msg": e.get("msg", "")}
                  for e in exc.errors()]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.get("/health", response_model=HealthResponse)
    def health():
        cfg = lm.checkpoint.config
        return HealthResponse(status="ok", model_points=cfg.n_points,
                              d_model=cfg.d_model, timesteps=cfg.timesteps)

    @app.get("/params/{category}", response_model=ParamRegistryResponse)
    def params(category: str):
        try:
            registry = param_registry(category)
        except ShapeError:
            return _error(404, f"unknown category {category!r}")
        return ParamRegistryResponse(category=category,
                                     params=[ParamSpecModel(**s.to_dict()) for s in registry])

    @app.post("/sessions", response_model=CreateSessionResponse)
    def create_session(body: CreateSessionRequest):
        sources = [s for s in (body.cloud, body.pc6, body.category) if s is not None]
        if len(sources) != 1:
            return _error(400, "provide exactly one of 'cloud', 'pc6', or 'category'")
        if body.cloud is not None:
            try:
                cloud = wire_to_cloud(body.cloud.model_dump())
            except CloudError as exc:
                return _error(400, f"cloud: {exc}")
        elif body.pc6 is not None:
            try:
                blob = base64.b64decode(body.pc6, validate=True)
                cloud, _ = cloud_from_pc6_bytes(blob)
            except (CloudError, ValueError) as exc:
                return _error(400, f"pc6: {exc}")
        else:
            try:
                params = default_params(body.category)
                for name, value in body.params.items():
                    params = params.replaced(name, value)
                params = ParamVector(params.category, params.values)
                cloud = sample_surface(generate_mesh(params), preview_points, seed=body.seed)
            except ShapeError as exc:
                return _error(400, f"params: {exc}")
        session = store.create(cloud)
        return CreateSessionResponse(id=session.id, cloud=CloudWire(**cloud_to_wire(cloud)))

    @app.post("/sessions/{session_id}/edit", response_model=EditResponse)
    def edit(session_id: str, body: EditRequest):
        try:
            session = store.get(session_id)
        except KeyError:
            return _error(404, f"unknown session {session_id!r}")
        if not session.lock.acquire(blocking=False):
            return _error(503, "model busy for this session", headers={"Retry-After": "1"})
        try:
            seed = body.seed if body.seed is not None \
                else int(np.random.default_rng().integers(2 ** 31))
            try:
                cfg = SamplerConfig(kind=body.sampler, steps=body.steps,
                                    guidance_scale=body.guidance, seed=seed)
                entry = session_edit(lm, session, body.instruction, cfg)
            except (PipelineError, ScheduleError, CloudError, ModelError) as exc:
                return _error(400, str(exc))
            store.log_edit(session_id, body.instruction, cfg)
            return EditResponse(history_index=entry.index, seed=seed,
                                cloud=CloudWire(**cloud_to_wire(entry.cloud)))
        finally:
            session.lock.release()

    @app.get("/sessions/{session_id}/history", response_model=HistoryResponse)
    def history(session_id: str):
        try:
            session = store.get(session_id)
        except KeyError:
            return _error(404, f"unknown session {session_id!r}")
        entries = [HistoryEntryModel(index=e.index, instruction=e.instruction,
                                     sampler=e.sampler, steps=e.steps, seed=e.seed,
                                     guidance=e.guidance,
                                     cloud=CloudWire(**cloud_to_wire(e.cloud)))
                   for e in session.entries]
        return HistoryResponse(id=session.id, current=session.current,
                               initial=CloudWire(**cloud_to_wire(session.initial)),
                               entries=entries)

    @app.post("/sessions/{session_id}/undo", response_model=UndoResponse)
    def undo(session_id: str):
        try:
            session = store.get(session_id)
        except KeyError:
            return _error(404, f"unknown session {session_id!r}")
        if not session.lock.acquire(blocking=False):
            return _error(503, "model busy for this session", headers={"Retry-After": "1"})
        try:
            current = session.undo()
            store.log_undo(session_id)
            return UndoResponse(current=current)
        finally:
            session.lock.release()

    if studio_dir is not None and Path(studio_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/studio", StaticFiles(directory=str(studio_dir), html=True), name="studio")

    return app
