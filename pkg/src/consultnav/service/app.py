"""HTTP session service: hosts live consultations for the interactive UI.

Each session binds one core-model instance. With the scripted core, new
sessions draw their backing case round-robin from the evaluation corpus and
a human answers instead of the replay patient; with a remote core the session
is driven entirely by the configured endpoint.
"""

from __future__ import annotations

import itertools
import uuid

from fastapi import FastAPI, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from ..config import AppConfig, require_file
from ..domain import load_cases, load_vocabulary
from ..engine import (
    ConsultationSession,
    CoreModel,
    RemoteCore,
    ScriptedCore,
    advance,
    corpus_symptom_frequency,
    session_to_dict,
    start_session,
)
from ..errors import SessionExpiredError, TransportError, UnknownSessionError
from ..policy import load_checkpoint
from .registry import SessionRegistry
from .schemas import (
    AnswerRequest,
    AnswerResponse,
    CandidateOut,
    CreateSessionRequest,
    HealthResponse,
    SessionCreated,
)


def create_app(config: AppConfig) -> FastAPI:
    vocab = load_vocabulary(config.vocabulary)

    navigator = None
    if config.navigator_mode in ("auto", "on"):
        if config.checkpoint_path.exists():
            navigator = load_checkpoint(config.checkpoint_path)
        elif config.navigator_mode == "on":
            raise FileNotFoundError(f"navigator checkpoint does not exist: {config.checkpoint_path}")

    if config.core_kind == "scripted":
        corpus_path = require_file(config.corpus_eval, "evaluation corpus (backs scripted sessions)")
        cases = [case for case in load_cases(corpus_path, vocab) if case.gold_all]
        frequency = corpus_symptom_frequency(cases, vocab.size)
        case_cycle = itertools.cycle(cases)

        def make_core() -> CoreModel:
            return ScriptedCore(next(case_cycle), vocab, frequency, config.scripted)
    else:

        def make_core() -> CoreModel:
            return RemoteCore(config.remote)

    registry = SessionRegistry(idle_seconds=config.idle_eviction_minutes * 60.0)
    app = FastAPI(title="consultnav session service", version="1.0")
    app.state.registry = registry
    app.state.vocab = vocab
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(UnknownSessionError)
    def _unknown(request, exc):
        return JSONResponse(status_code=404, content={"error": "unknown_session", "detail": str(exc)})

    @app.exception_handler(SessionExpiredError)
    def _expired(request, exc):
        return JSONResponse(status_code=410, content={"error": "session_expired", "detail": str(exc)})

    @app.exception_handler(TransportError)
    def _transport(request, exc):
        return JSONResponse(status_code=502, content={"error": "core_transport", "detail": str(exc)})

    @app.get("/api/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", vocab_size=vocab.size)

    @app.post("/api/v1/sessions", response_model=SessionCreated, status_code=201)
    def create_session(request: CreateSessionRequest) -> SessionCreated:
        session = start_session(
            make_core(),
            vocab,
            navigator=navigator,
            window=config.engine_window,
            seed=config.seed,
            turn_limit=config.turn_limit,
            session_id=uuid.uuid4().hex,
        )
        registry.add(session)
        return SessionCreated(
            session_id=session.session_id,
            question=session.transcript[0].inquiry,
            turn=0,
            status=session.status,
        )

    def _answer_payload(session: ConsultationSession) -> AnswerResponse:
        last = session.transcript[-1]
        if session.status == "active":
            return AnswerResponse(
                question=last.inquiry,
                candidates=[CandidateOut(text=c.text, source=c.source) for c in last.candidates],
                turn=last.t,
                status=session.status,
            )
        return AnswerResponse(turn=last.t, status=session.status, conclusion=session.conclusion)

    @app.post(
        "/api/v1/sessions/{session_id}/answer",
        response_model=AnswerResponse,
        response_model_exclude_none=True,
    )
    def answer_session(session_id: str, request: AnswerRequest) -> AnswerResponse | JSONResponse:
        entry = registry.access(session_id)
        with entry.lock:
            if entry.session.status != "active":
                return JSONResponse(
                    status_code=409,
                    content={
                        "error": "session_closed",
                        "detail": f"session already ended with status {entry.session.status!r}",
                    },
                )
            advance(entry.session, request.answer)
            return _answer_payload(entry.session)

    @app.get("/api/v1/sessions/{session_id}")
    def get_transcript(session_id: str) -> dict:
        entry = registry.access(session_id)
        with entry.lock:
            return session_to_dict(entry.session)

    @app.delete("/api/v1/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> Response:
        registry.remove(session_id)
        return Response(status_code=204)

    if config.static_dir is not None and config.static_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(config.static_dir), html=True), name="ui")

    return app
