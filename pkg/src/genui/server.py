"""HTTP surface: generation API, event streams, page serving, asset
endpoints, client-error intake, and verdict ingestion for the rating UI."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import HTMLResponse, RedirectResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .arena import ComparisonRecord
from .assets import BadRequest
from .config import AppConfig
from .service import GenUIService, NoReadyPage, UnknownRun, UnknownSession
from .store import UnknownPage

PAGE_SECURITY_HEADERS = {
    # pages are meant for sandboxed same-origin frames only
    "Content-Security-Policy": "frame-ancestors 'self'",
    "X-Content-Type-Options": "nosniff",
    "Referrer-Policy": "no-referrer",
}


def _raw_query_param(request: Request, name: str) -> Optional[str]:
    """Fetch a query parameter without decoding, so the asset layer performs
    the single authoritative url-decode."""
    qs = request.scope.get("query_string", b"").decode("latin-1")
    for part in qs.split("&"):
        key, sep, value = part.partition("=")
        if key == name:
            return value if sep else ""
    return None


def create_app(config: Optional[AppConfig] = None,
               service: Optional[GenUIService] = None) -> FastAPI:
    service = service or GenUIService(config)
    app = FastAPI(title="genui", docs_url=None, redoc_url=None)
    app.state.service = service
    records_path = Path(service.config.store_path) / "records.jsonl"
    records_lock = threading.Lock()
    seen_record_keys: set[str] = set()

    @app.post("/api/generate")
    def generate(body: dict[str, Any]) -> dict[str, str]:
        prompt = str(body.get("prompt", ""))
        if not prompt.strip():
            raise HTTPException(400, "prompt must be non-empty")
        session_id = body.get("session_id")
        try:
            if session_id:
                run = service.follow_up(str(session_id), prompt,
                                        user_location=body.get("user_location"))
            else:
                run = service.start_generation(
                    prompt,
                    style=str(body.get("style") or "default"),
                    profile=str(body.get("profile") or "full"),
                    user_location=body.get("user_location"),
                    arm=str(body.get("arm") or ""))
        except UnknownSession as exc:
            raise HTTPException(404, f"unknown session {exc}")
        except NoReadyPage as exc:
            raise HTTPException(409, str(exc))
        except KeyError as exc:  # unknown style/profile
            raise HTTPException(400, f"unknown style or profile: {exc}")
        return {"run_id": run.id, "session_id": run.session_id}

    @app.get("/api/runs/{run_id}/events")
    def run_events(run_id: str) -> StreamingResponse:
        try:
            run = service.get_run(run_id)
        except UnknownRun:
            raise HTTPException(404, f"unknown run {run_id}")

        def ndjson():
            for event in run.stream():
                yield json.dumps(event) + "\n"

        return StreamingResponse(ndjson(), media_type="application/x-ndjson")

    @app.get("/page/{page_id}")
    def serve_page(page_id: str) -> HTMLResponse:
        try:
            artifact = service.store.load(page_id)
        except UnknownPage:
            raise HTTPException(404, f"unknown page {page_id}")
        if artifact.final_html is None:
            raise HTTPException(409, "page has no renderable output")
        return HTMLResponse(artifact.final_html,
                            headers=dict(PAGE_SECURITY_HEADERS))

    @app.post("/client-errors", status_code=204)
    def client_errors(body: dict[str, Any]) -> Response:
        page_id = str(body.get("page_id", ""))
        try:
            service.store.record_client_error(page_id, body)
        except UnknownPage:
            raise HTTPException(404, f"unknown page {page_id}")
        return Response(status_code=204)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str) -> dict[str, Any]:
        try:
            session = service.get_session(session_id)
        except UnknownSession:
            raise HTTPException(404, f"unknown session {session_id}")
        return {
            "id": session.id,
            "style": session.style,
            "profile": session.profile,
            "pages": list(session.pages),
            "history_length": len(session.history),
        }

    @app.get("/api/pages/{page_id}/artifact")
    def get_artifact(page_id: str) -> dict[str, Any]:
        try:
            artifact = service.store.load(page_id)
        except UnknownPage:
            raise HTTPException(404, f"unknown page {page_id}")
        return {
            "id": artifact.id,
            "session": artifact.session,
            "arm": artifact.arm,
            "raw_output": artifact.raw_output,
            "extracted": {
                "status": artifact.extracted.status.value,
                "error_kind": artifact.extracted.error_kind.value
                if artifact.extracted.error_kind else None,
            },
            "final_html": artifact.final_html,
            "report": artifact.report.to_dict() if artifact.report else None,
            "client_errors": artifact.client_errors,
            "client_error_count": artifact.client_error_count,
            "timings": artifact.timings,
            "output_error": artifact.output_error,
        }

    @app.post("/api/records")
    def post_record(body: dict[str, Any]) -> dict[str, Any]:
        idempotency_key = body.pop("idempotency_key", None)
        try:
            record = ComparisonRecord(
                study=str(body["study"]), prompt_id=str(body["prompt_id"]),
                left=str(body["left"]), right=str(body["right"]),
                rater=str(body["rater"]), verdict=str(body["verdict"]))
        except (KeyError, ValueError) as exc:
            raise HTTPException(400, f"malformed record: {exc}")
        a, b = sorted((record.left, record.right))
        natural_key = f"{record.study}|{record.prompt_id}|{a}|{b}|{record.rater}"
        key = str(idempotency_key) if idempotency_key else natural_key
        with records_lock:
            if key in seen_record_keys or natural_key in seen_record_keys:
                return {"accepted": True, "duplicate": True}
            seen_record_keys.add(key)
            seen_record_keys.add(natural_key)
            with open(records_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(vars(record)) + "\n")
        return {"accepted": True, "duplicate": False}

    @app.get("/image")
    def image(request: Request) -> Response:
        try:
            record = service.assets.handle_image(
                _raw_query_param(request, "query"))
        except BadRequest as exc:
            raise HTTPException(400, str(exc))
        return Response(record.bytes, media_type=record.media_type,
                        headers={"X-Asset-Provider": record.provider})

    @app.get("/gen")
    def gen(request: Request) -> Response:
        try:
            record = service.assets.handle_gen(
                _raw_query_param(request, "prompt"),
                _raw_query_param(request, "aspect"))
        except BadRequest as exc:
            raise HTTPException(400, str(exc))
        return Response(record.bytes, media_type=record.media_type,
                        headers={"X-Asset-Provider": record.provider})

    studio_dist = service.config.studio_dist
    if studio_dist and Path(studio_dist).is_dir():
        app.mount("/studio", StaticFiles(directory=studio_dist, html=True),
                  name="studio")

        @app.get("/")
        def index() -> RedirectResponse:
            return RedirectResponse("/studio/")

    return app
