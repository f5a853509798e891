"""Pydantic request/response models for the HTTP wire protocol."""

from __future__ import annotations

from pydantic import BaseModel, Field


class CreateSessionRequest(BaseModel):
    student_id: str = Field(..., min_length=1)


class ProblemView(BaseModel):
    question_id: str
    kc_id: str
    question_text: str
    kc_text: str
    language: str = "java"


class SessionView(BaseModel):
    session_id: str
    student_id: str
    created_at: float
    current_problem: ProblemView | None
    history_length: int
    hint_count: int


class SubmitRequest(BaseModel):
    code: str = Field(..., min_length=1)


class FeedbackBundleView(BaseModel):
    mode: str
    comparison: str
    components: dict[str, str]
    raw_response: str
    protocol_violation: bool = False
    degraded: bool = False


class SubmitResponse(BaseModel):
    correct: int
    model_prob: float
    feedback: FeedbackBundleView
    replayed: bool = False


class HintResponse(BaseModel):
    feedback: FeedbackBundleView


class EventView(BaseModel):
    event_type: str
    timestamp: float


class InteractionView(BaseModel):
    student_id: str
    question_id: str
    kc_id: str
    correct: int
    answer_code: str
    question_text: str | None = None
    kc_text: str | None = None
    timestamp: int | None = None
    language: str = "java"


class HistoryResponse(BaseModel):
    session_id: str
    student_id: str
    interactions: list[InteractionView]
    events: list[EventView]


class ErrorBody(BaseModel):
    code: str
    message: str
    detail: str | None = None
