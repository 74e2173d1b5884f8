"""FastAPI service wrapping the pipeline: session lifecycle, turns,
overlays, grounding reports, one-shot detection, and health.

Stateless apart from the session store, so restarting against the same
store directory preserves every transcript. Error bodies carry the
exception taxonomy name so clients can branch without string matching.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, File, Form, Query, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from ..config import ServiceConfig
from ..detector import DetectorBackend, FileBackend, OnnxBackend, SidecarConfig, StubBackend
from ..errors import (
    BackendError,
    ImageTooLargeError,
    NotFoundError,
    SarScoutError,
    VlmError,
)
from ..grounding import extract_regions, grounding_report, render_overlay
from ..prompting import MODES, load_templates
from ..session import DirectorySessionStore, SessionManager, export_transcript
from ..vlm_client import MockVlmClient, OpenAiCompatClient, VlmClient
from .schemas import (
    SCHEMA_INDEX,
    DetectionSetModel,
    GroundingReportModel,
    HealthModel,
    SessionCreatedModel,
    TranscriptModel,
    TurnModel,
)

__all__ = ["create_app", "build_manager"]


class SessionLimitError(SarScoutError):
    """The configured max_sessions ceiling was reached."""


def _status_for(exc: SarScoutError) -> int:
    if isinstance(exc, NotFoundError):
        return 404
    if isinstance(exc, ImageTooLargeError):
        return 413
    if isinstance(exc, (BackendError, VlmError)):
        return 502
    return 400


def _build_detector(config: ServiceConfig) -> DetectorBackend:
    if config.detector_backend == "file":
        return FileBackend(config.detections_path)
    if config.detector_backend == "onnx":
        sidecar = SidecarConfig.load(config.sidecar_path) if config.sidecar_path else None
        return OnnxBackend(config.model_path, sidecar=sidecar)
    return StubBackend()


def _build_vlm(config: ServiceConfig) -> VlmClient:
    if config.vlm_mode == "mock":
        return MockVlmClient.from_file(config.vlm_script_path, retry_budget=config.retry_budget)
    if not config.vlm_base_url:
        import os

        return OpenAiCompatClient.from_env(os.environ, retry_budget=config.retry_budget)
    return OpenAiCompatClient(
        config.vlm_base_url,
        api_key=config.vlm_api_key,
        model_name=config.vlm_model,
        retry_budget=config.retry_budget,
    )


def build_manager(config: ServiceConfig) -> SessionManager:
    return SessionManager(
        DirectorySessionStore(config.store_dir),
        _build_detector(config),
        _build_vlm(config),
        load_templates(config.template_dir),
        default_mode=config.default_mode,
        scene_block_every_turn=config.scene_block_every_turn,
        conf_threshold=config.conf_threshold,
        nms_threshold=config.nms_threshold,
        max_image_bytes=config.max_image_bytes,
        request_timeout_ms=int(config.request_timeout_s * 1000),
    )


def create_app(config: ServiceConfig, *, manager: SessionManager | None = None) -> FastAPI:
    manager = manager if manager is not None else build_manager(config)
    app = FastAPI(title="sarscout", version="0.1.0", docs_url="/v1/docs", openapi_url="/v1/openapi.json")

    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[o.strip() for o in config.cors_origins.split(",") if o.strip()],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(SarScoutError)
    async def _domain_error(_request: Request, exc: SarScoutError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": {"type": type(exc).__name__, "message": str(exc)}},
        )

    def _read_upload(upload: UploadFile) -> tuple[bytes, str]:
        data = upload.file.read()
        if len(data) > config.max_image_bytes:
            raise ImageTooLargeError(len(data), config.max_image_bytes)
        filename = upload.filename or "upload"
        stem = filename.rsplit("/", 1)[-1]
        stem = stem.rsplit(".", 1)[0] if "." in stem else stem
        return data, stem or "upload"

    @app.get("/v1/health", response_model=HealthModel)
    def health():
        return HealthModel()

    @app.get("/v1/schema")
    def schema():
        return {name: model.model_json_schema() for name, model in SCHEMA_INDEX.items()}

    @app.post("/v1/sessions", response_model=SessionCreatedModel, status_code=201)
    def create_session(image: UploadFile = File(...), mode: str | None = Form(None)):
        if mode is not None and mode not in MODES:
            from ..errors import InvalidArgumentError

            raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
        if len(manager.store.list_ids()) >= config.max_sessions:
            raise SessionLimitError(f"session limit {config.max_sessions} reached")
        data, image_id = _read_upload(image)
        session = manager.start_session(data, mode=mode, image_id=image_id)
        return SessionCreatedModel.from_domain(session)

    @app.post("/v1/sessions/{session_id}/turns", response_model=TurnModel)
    def post_turn(session_id: str, body: dict):
        from ..errors import InvalidArgumentError

        question = body.get("question") if isinstance(body, dict) else None
        if not isinstance(question, str):
            raise InvalidArgumentError("body must be a JSON object with a string 'question'")
        turn = manager.ask(session_id, question)
        return TurnModel.from_domain(turn)

    @app.get("/v1/sessions/{session_id}", response_model=TranscriptModel)
    def get_transcript(session_id: str):
        return export_transcript(manager.get(session_id))

    @app.get("/v1/sessions/{session_id}/overlay")
    def get_overlay(session_id: str, turn: int | None = Query(default=None)):
        session = manager.get(session_id)
        regions = ()
        if turn is not None:
            if not 0 <= turn < len(session.turns):
                raise NotFoundError(f"session {session_id!r} has no turn {turn}")
            regions = extract_regions(
                session.turns[turn].answer_text, session.image_w, session.image_h
            )
        png = render_overlay(
            manager.store.image_bytes(session_id),
            detections=session.detections.boxes,
            regions=regions,
        )
        return Response(content=png, media_type="image/png")

    @app.get("/v1/sessions/{session_id}/grounding", response_model=GroundingReportModel)
    def get_grounding(session_id: str, turn: int = Query(...)):
        session = manager.get(session_id)
        if not 0 <= turn < len(session.turns):
            raise NotFoundError(f"session {session_id!r} has no turn {turn}")
        return grounding_report(
            session_id,
            turn,
            session.turns[turn].answer_text,
            session.detections.boxes,
            session.image_w,
            session.image_h,
        )

    @app.post("/v1/detect", response_model=DetectionSetModel)
    def detect(image: UploadFile = File(...)):
        data, image_id = _read_upload(image)
        ds = manager.detector.detect(
            data,
            image_id=image_id,
            conf_threshold=manager.conf_threshold,
            nms_threshold=manager.nms_threshold,
        )
        return json.loads(ds.to_json())

    return app
