"""Session events and the pure projection fold.

A session is fully described by its append-only event list; the projection
below is a pure fold over that list, so replaying a log reconstructs the
exact same state (the event-sourcing test serializes both and compares
bytes). Everything the fold needs is recorded in the events themselves,
including timestamps and the next problem chosen at submit time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

SESSION_CREATED = "session_created"
SUBMITTED = "submitted"
FEEDBACK_RETURNED = "feedback_returned"
HINT_REQUESTED = "hint_requested"


def make_event(event_type: str, payload: dict, timestamp: float) -> dict:
    return {"event_type": event_type, "payload": payload, "timestamp": timestamp}


@dataclass
class SessionState:
    """Projection of one session's event log."""

    session_id: str = ""
    student_id: str = ""
    created_at: float = 0.0
    current_problem: dict | None = None
    history: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    submissions: dict[str, dict] = field(default_factory=dict)
    answered_question_ids: list[str] = field(default_factory=list)
    feedback_by_key: dict[str, dict] = field(default_factory=dict)
    hint_count: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "session_id": self.session_id,
            "student_id": self.student_id,
            "created_at": self.created_at,
            "current_problem": self.current_problem,
            "history": self.history,
            "events": self.events,
            "submissions": self.submissions,
            "answered_question_ids": self.answered_question_ids,
            "feedback_by_key": self.feedback_by_key,
            "hint_count": self.hint_count,
        }, sort_keys=True, ensure_ascii=False)


def apply_event(state: SessionState, event: dict) -> SessionState:
    """Fold one event into the projection (mutates and returns state)."""
    etype = event["event_type"]
    payload = event["payload"]
    state.events.append(event)
    if etype == SESSION_CREATED:
        state.session_id = payload["session_id"]
        state.student_id = payload["student_id"]
        state.created_at = event["timestamp"]
        state.current_problem = payload["problem"]
    elif etype == SUBMITTED:
        key = payload["idempotency_key"]
        state.history.append(payload["interaction"])
        state.submissions[key] = {
            "interaction": payload["interaction"],
            "model_prob": payload["model_prob"],
        }
        state.answered_question_ids.append(payload["interaction"]["question_id"])
        state.current_problem = payload["next_problem"]
    elif etype == FEEDBACK_RETURNED:
        key = payload.get("idempotency_key")
        if key:
            state.feedback_by_key[key] = payload["bundle"]
    elif etype == HINT_REQUESTED:
        state.hint_count += 1
    return state


def project(events: Iterable[dict], initial: SessionState | None = None) -> SessionState:
    state = initial or SessionState()
    for event in events:
        apply_event(state, event)
    return state
