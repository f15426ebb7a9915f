"""HTTP face of the engine: prediction, feedback, collection, telemetry.

Thin by design; every decision lives in PortalEngine.  Errors map to
status codes by family: bad input 400, unknown things 404, conflicting
state 409.
"""

from __future__ import annotations

from datetime import datetime, timezone

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import PortalConfig
from .encoder import AppLaunch, ContextSnapshot
from .errors import (
    DuplicateFunction,
    DuplicateSelection,
    EmptyInput,
    InvalidRequest,
    LastFunction,
    PortalError,
    UnknownFunction,
    UnknownRequest,
    UnknownUser,
)
from .memory import FunctionDescriptor, function_id
from .portal import PortalEngine

STATUS_BY_ERROR: tuple[tuple[type, int], ...] = (
    (InvalidRequest, 400),
    (EmptyInput, 400),
    (UnknownUser, 404),
    (UnknownRequest, 404),
    (UnknownFunction, 404),
    (DuplicateSelection, 409),
    (DuplicateFunction, 409),
    (LastFunction, 409),
)


class LaunchBody(BaseModel):
    app: str
    ts: datetime


class ContextBody(BaseModel):
    now: datetime | None = None
    launches: list[LaunchBody] = Field(default_factory=list)


class PredictBody(BaseModel):
    user_id: str
    text: str
    context: ContextBody = Field(default_factory=ContextBody)


class SelectBody(BaseModel):
    user_id: str
    request_id: str
    function_id: str
    satisfaction: int | None = None


class FunctionBody(BaseModel):
    user_id: str
    app: str
    action: str
    contact: str | None = None
    description: str | None = None
    id: str | None = None


class RetrainBody(BaseModel):
    user_id: str | None = None


def _snapshot(body: ContextBody) -> ContextSnapshot:
    now = body.now or datetime.now(timezone.utc)
    if now.tzinfo is None:
        now = now.replace(tzinfo=timezone.utc)
    launches = []
    for l in body.launches:
        ts = l.ts if l.ts.tzinfo else l.ts.replace(tzinfo=timezone.utc)
        launches.append(AppLaunch(app=l.app, timestamp=ts))
    return ContextSnapshot(now=now, launches=tuple(launches))


def _status_for(exc: PortalError) -> int:
    for cls, code in STATUS_BY_ERROR:
        if isinstance(exc, cls):
            return code
    return 500


def create_app(
    engine: PortalEngine | None = None, config: PortalConfig | None = None
) -> FastAPI:
    engine = engine or PortalEngine(config=config)
    app = FastAPI(title="intentportal", version="0.1.0")
    app.state.engine = engine

    @app.exception_handler(PortalError)
    async def portal_error(_: Request, exc: PortalError) -> JSONResponse:
        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.post("/v1/predict")
    def predict(body: PredictBody) -> dict:
        result = engine.predict(body.user_id, body.text, _snapshot(body.context))
        return {
            "request_id": result.request_id,
            "entries": [
                {"function_id": e.function_id, "score": e.score, "rank": e.rank}
                for e in result.entries
            ],
            "provenance": result.provenance,
            "confidence": result.confidence,
            "latency_ms": result.latency_ms,
        }

    @app.post("/v1/select")
    def select(body: SelectBody) -> dict:
        ack = engine.select(
            body.user_id, body.request_id, body.function_id, body.satisfaction
        )
        return {"ok": True, **ack}

    @app.get("/v1/functions")
    def list_functions(user_id: str) -> dict:
        return {
            "functions": [fn.to_dict() for fn in engine.list_functions(user_id)]
        }

    @app.post("/v1/functions")
    def add_function(body: FunctionBody) -> dict:
        fid = body.id or function_id(body.app, body.action, body.contact)
        try:
            fn = FunctionDescriptor(
                id=fid,
                app=body.app,
                action=body.action,
                contact=body.contact,
                description=body.description,
            )
        except ValueError as exc:
            raise InvalidRequest(str(exc))
        collection = engine.add_function(body.user_id, fn)
        return {"functions": [f.to_dict() for f in collection]}

    @app.delete("/v1/functions/{fid}")
    def remove_function(fid: str, user_id: str) -> dict:
        collection = engine.remove_function(user_id, fid)
        return {"functions": [f.to_dict() for f in collection]}

    @app.post("/v1/retrain")
    def retrain(body: RetrainBody) -> dict:
        if body.user_id:
            reports = {body.user_id: engine.retrain_user(body.user_id)}
        else:
            reports = engine.retrain_all()
        return {
            "reports": {
                uid: {
                    "epochs": r.epochs,
                    "initial_loss": r.initial_loss,
                    "final_loss": r.final_loss,
                    "wall_ms": r.wall_ms,
                    "note": r.note,
                }
                for uid, r in reports.items()
            }
        }

    @app.get("/v1/health")
    def health() -> dict:
        return {
            "status": "ok",
            "users": len(engine.stores),
            "llm": engine.llm is not None,
        }

    @app.get("/v1/telemetry")
    def telemetry(n: int = 100) -> dict:
        return {"events": engine.telemetry.recent(n)}

    return app
