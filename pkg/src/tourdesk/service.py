"""HTTP facade: session lifecycle, turns, views, metrics, and spot images.

Per-session requests are serialized by the orchestrator's locks; a second
concurrent turn for the same session simply queues behind the first. Bodies
are JSON, UTF-8. Configuration comes from TOURDESK_* environment variables
unless an orchestrator is injected (as the tests do).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .backends import BackendUnavailable
from .config import Config
from .orchestrator import Orchestrator, SessionEnded, SessionNotFound, compute_metrics
from .scenario import transition_table
from .store import StorageError


class TurnRequest(BaseModel):
    text: str


def create_app(
    orchestrator: Orchestrator | None = None,
    config: Config | None = None,
    frontend_dir: str | None = None,
) -> FastAPI:
    config = config or Config.from_env()
    orch = orchestrator or Orchestrator.from_config(config)
    app = FastAPI(title="tourdesk", version="0.1.0")
    app.state.orchestrator = orch

    @app.post("/sessions", status_code=201)
    def create_session() -> dict:
        try:
            session_id = orch.create_session()
        except StorageError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return {"session_id": session_id, "state": orch.get_session(session_id).state.value}

    @app.post("/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnRequest) -> dict:
        try:
            return orch.post_user_turn(session_id, body.text).to_dict()
        except SessionNotFound:
            raise HTTPException(status_code=404, detail=f"no such session: {session_id}")
        except SessionEnded:
            raise HTTPException(status_code=409, detail="session has ended")
        except BackendUnavailable as exc:
            raise HTTPException(status_code=503, detail=f"generation backend unavailable: {exc}")
        except StorageError as exc:
            raise HTTPException(status_code=500, detail=str(exc))

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        try:
            return orch.session_view(session_id)
        except SessionNotFound:
            raise HTTPException(status_code=404, detail=f"no such session: {session_id}")

    @app.get("/metrics")
    def metrics(threshold_km: float | None = None) -> dict:
        try:
            report = compute_metrics(
                orch.store,
                orch.config.threshold_km if threshold_km is None else threshold_km,
            )
        except StorageError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return report.to_dict()

    @app.get("/transitions")
    def transitions() -> list[dict]:
        return transition_table()

    @app.get("/images/{spot_id}.svg")
    def spot_image(spot_id: str) -> Response:
        if spot_id not in orch.catalog:
            raise HTTPException(status_code=404, detail=f"no such spot: {spot_id}")
        spot = orch.catalog.get(spot_id)
        return Response(content=_placeholder_svg(spot.id, spot.name), media_type="image/svg+xml")

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/app", StaticFiles(directory=frontend_dir, html=True), name="app")

    return app


def _placeholder_svg(spot_id: str, name: str) -> str:
    hue = int(hashlib.sha256(spot_id.encode("utf-8")).hexdigest(), 16) % 360
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" width="320" height="200" '
        'viewBox="0 0 320 200">'
        f'<rect width="320" height="200" fill="hsl({hue}, 45%, 72%)"/>'
        f'<rect x="12" y="12" width="296" height="176" fill="none" '
        f'stroke="hsl({hue}, 45%, 35%)" stroke-width="3"/>'
        f'<text x="160" y="108" font-size="28" text-anchor="middle" '
        f'fill="hsl({hue}, 50%, 22%)">{name}</text>'
        "</svg>"
    )
