"""Tutoring session service: event-sourced sessions behind a JSON HTTP API."""

from .app import ServiceConfig, create_app
from .core import Problem, ProblemBank, SessionService, exact_match_judge, submission_hash
from .events import SessionState, apply_event, project
from .store import SessionStore

__all__ = [
    "ServiceConfig",
    "create_app",
    "Problem",
    "ProblemBank",
    "SessionService",
    "exact_match_judge",
    "submission_hash",
    "SessionState",
    "apply_event",
    "project",
    "SessionStore",
]
