"""FastAPI application wrapping the session service.

Configuration is a single JSON file (see ServiceConfig); the LLM API key
comes from the environment variable named in the llm section. When a built
frontend directory is configured it is served under /app.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..errors import (
    CodeLktError,
    HintUnavailable,
    JudgeUnavailable,
    LlmError,
    SessionNotFound,
    ValidationError,
)
from ..kt_model import ToyTextEncoder, PredictionHead, TrainConfig, TrainedModel, load_checkpoint, predict_next
from ..textualization import HttpLlmClient, LlmClientConfig, StubLlmClient, deterministic_stub
from .core import Problem, ProblemBank, SessionService
from .schemas import (
    CreateSessionRequest,
    ErrorBody,
    FeedbackBundleView,
    HintResponse,
    HistoryResponse,
    ProblemView,
    SessionView,
    SubmitRequest,
    SubmitResponse,
)
from .store import SessionStore

STATUS_BY_ERROR = {
    SessionNotFound: 404,
    HintUnavailable: 409,
    JudgeUnavailable: 503,
    ValidationError: 400,
    LlmError: 502,
}


@dataclass
class ServiceConfig:
    data_dir: str = "./codelkt_data"
    problem_bank: str = "./problems.json"
    checkpoint: str | None = None
    comparison: str = "c1"
    llm: dict = field(default_factory=lambda: {"mode": "stub"})
    frontend_dir: str | None = None
    seed: int = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**raw)


def build_llm(llm_config: dict):
    mode = llm_config.get("mode", "stub")
    if mode == "stub":
        fixture_dir = llm_config.get("fixture_dir")
        if fixture_dir:
            return StubLlmClient(fixture_dir=fixture_dir)
        return deterministic_stub()
    if mode == "http":
        cfg = LlmClientConfig(**{k: v for k, v in llm_config.items() if k != "mode"})
        return HttpLlmClient(cfg)
    raise ValidationError(f"unknown llm mode {mode!r}")


def build_predictor(config: ServiceConfig):
    """Model-probability source: a trained checkpoint when configured,
    otherwise a fresh seeded toy model (uniform 0.5 until trained)."""
    if config.checkpoint:
        model = load_checkpoint(config.checkpoint).model
    else:
        encoder = ToyTextEncoder(seed=config.seed)
        model = TrainedModel(
            encoder=encoder,
            head=PredictionHead.zeros(encoder.dim),
            config=TrainConfig(seed=config.seed),
        )

    def predictor(history, problem: Problem) -> float:
        enriched = [it for it in history if it.enriched]
        return predict_next(model, enriched, {
            "kc_text": problem.kc_text,
            "question_text": problem.question_text,
            "kc_id": problem.kc_id,
            "question_id": problem.question_id,
        })

    return predictor


def _session_view(state) -> SessionView:
    return SessionView(
        session_id=state.session_id,
        student_id=state.student_id,
        created_at=state.created_at,
        current_problem=ProblemView(**state.current_problem) if state.current_problem else None,
        history_length=len(state.history),
        hint_count=state.hint_count,
    )


def create_app(config: ServiceConfig, service: SessionService | None = None) -> FastAPI:
    app = FastAPI(title="codelkt tutoring service")

    if service is None:
        bank = ProblemBank.from_json(config.problem_bank)
        store = SessionStore(config.data_dir)
        service = SessionService(
            bank=bank,
            store=store,
            predictor=build_predictor(config),
            llm=build_llm(config.llm),
            comparison=config.comparison,
        )
    app.state.service = service

    @app.exception_handler(CodeLktError)
    async def domain_error_handler(request: Request, exc: CodeLktError):
        status = 400
        for etype, code in STATUS_BY_ERROR.items():
            if isinstance(exc, etype):
                status = code
                break
        body = ErrorBody(code=exc.code, message=exc.message, detail=exc.detail)
        return JSONResponse(status_code=status, content=body.model_dump())

    @app.post("/sessions", response_model=SessionView, status_code=201)
    def create_session(request: CreateSessionRequest):
        state = service.create_session(request.student_id)
        return _session_view(state)

    @app.get("/sessions/{session_id}", response_model=SessionView)
    def get_session(session_id: str):
        return _session_view(service.get_session(session_id))

    @app.post("/sessions/{session_id}/hint", response_model=HintResponse)
    def request_hint(session_id: str):
        bundle = service.request_hint(session_id)
        return HintResponse(feedback=FeedbackBundleView(**bundle.to_dict()))

    @app.post("/sessions/{session_id}/submit", response_model=SubmitResponse)
    def submit(session_id: str, request: SubmitRequest):
        result = service.submit_answer(session_id, request.code)
        return SubmitResponse(
            correct=result["correct"],
            model_prob=result["model_prob"],
            feedback=FeedbackBundleView(**result["feedback"]),
            replayed=result["replayed"],
        )

    @app.get("/sessions/{session_id}/history", response_model=HistoryResponse)
    def history(session_id: str):
        return HistoryResponse(**service.get_history(session_id))

    @app.get("/problems", response_model=list[ProblemView])
    def problems():
        return [ProblemView(**p.to_dict()) for p in service.bank.problems]

    if config.frontend_dir and Path(config.frontend_dir).is_dir():
        app.mount("/app", StaticFiles(directory=config.frontend_dir, html=True), name="app")

    return app
