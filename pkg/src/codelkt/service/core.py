"""Session-oriented tutoring logic: problems, submissions, hints, history.

Commands within one session are serialized by a per-session lock; the LLM
call happens inside the command but after the interaction is persisted, so
a feedback failure degrades the response without losing the submission.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ..data_model import Interaction
from ..errors import (
    FeedbackParseError,
    HintUnavailable,
    JudgeUnavailable,
    LlmError,
    SessionNotFound,
    ValidationError,
)
from ..feedback import (
    FeedbackBundle,
    LearnerContext,
    build_correctness_prompt,
    build_hint_prompt,
    extract_ast,
    generate_feedback,
    parse_feedback,
)
from ..textualization import LlmClient
from .events import (
    FEEDBACK_RETURNED,
    HINT_REQUESTED,
    SESSION_CREATED,
    SUBMITTED,
    SessionState,
    make_event,
)
from .store import SessionStore

FALLBACK_FEEDBACK = (
    "Feedback generation is temporarily unavailable. Your submission was "
    "recorded; please retry in a moment for detailed feedback."
)


@dataclass
class Problem:
    question_id: str
    kc_id: str
    question_text: str
    kc_text: str
    reference_solution: str | None = None
    language: str = "java"

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "kc_id": self.kc_id,
            "question_text": self.question_text,
            "kc_text": self.kc_text,
            "language": self.language,
        }


@dataclass
class ProblemBank:
    problems: list[Problem] = field(default_factory=list)

    def __post_init__(self):
        if not self.problems:
            raise ValidationError("problem bank is empty")
        self.by_id = {p.question_id: p for p in self.problems}

    @classmethod
    def from_json(cls, path: str | Path) -> "ProblemBank":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(problems=[Problem(**entry) for entry in raw])


def exact_match_judge(problem: Problem, code: str) -> int:
    """Default judge: whitespace-insensitive equality with the reference."""
    if problem.reference_solution is None:
        return 0
    return int("".join(code.split()) == "".join(problem.reference_solution.split()))


def submission_hash(code: str) -> str:
    """Idempotency key material: a retry of the same code text replays the
    recorded outcome instead of persisting a second interaction, even after
    the session advanced to the next problem."""
    return hashlib.sha256(code.encode("utf-8")).hexdigest()


class SessionService:
    """Mailbox-style session commands over the event store."""

    def __init__(
        self,
        bank: ProblemBank,
        store: SessionStore,
        predictor: Callable[[Sequence[Interaction], Problem], float],
        llm: LlmClient,
        judge: Callable[[Problem, str], int] = exact_match_judge,
        comparison: str = "c1",
        clock: Callable[[], float] = time.time,
        crash_hook: Callable[[str], None] | None = None,
    ):
        self.bank = bank
        self.store = store
        self.predictor = predictor
        self.llm = llm
        self.judge = judge
        self.comparison = comparison
        self.clock = clock
        self.crash_hook = crash_hook  # test seam: raise at a named point
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    # -- student-level views ----------------------------------------------

    def _student_interactions(self, student_id: str) -> list[Interaction]:
        """All of a student's submitted interactions across sessions, in
        event-time order (the shared history view)."""
        stamped: list[tuple[float, dict]] = []
        for sid in self.store.sessions_of_student(student_id):
            for event in self.store.events(sid):
                if event["event_type"] == SUBMITTED:
                    stamped.append((event["timestamp"], event["payload"]["interaction"]))
        stamped.sort(key=lambda pair: pair[0])
        return [Interaction(**d) for _, d in stamped]

    def _attempted_question_ids(self, student_id: str) -> set[str]:
        return {it.question_id for it in self._student_interactions(student_id)}

    def _pick_problem(self, student_id: str, extra_attempted: set[str] = frozenset()) -> Problem:
        attempted = self._attempted_question_ids(student_id) | set(extra_attempted)
        for problem in self.bank.problems:
            if problem.question_id not in attempted:
                return problem
        return self.bank.problems[0]  # everything attempted: wrap to the start

    # -- commands ----------------------------------------------------------

    def create_session(self, student_id: str) -> SessionState:
        if not student_id:
            raise ValidationError("student_id must be nonempty")
        session_id = uuid.uuid4().hex
        problem = self._pick_problem(student_id)
        event = make_event(SESSION_CREATED, {
            "session_id": session_id,
            "student_id": student_id,
            "problem": problem.to_dict(),
        }, self.clock())
        self.store.append(session_id, event)
        return self.store.load_state(session_id)

    def get_session(self, session_id: str) -> SessionState:
        if not self.store.exists(session_id):
            raise SessionNotFound(f"no session {session_id!r}")
        return self.store.load_state(session_id)

    def submit_answer(self, session_id: str, code: str) -> dict:
        if not code:
            raise ValidationError("code must be nonempty")
        with self._lock(session_id):
            state = self.get_session(session_id)
            if state.current_problem is None:
                raise ValidationError("session has no current problem")
            problem = Problem(**{**state.current_problem,
                                 "reference_solution": self._reference(state.current_problem)})
            key = submission_hash(code)

            if key in state.submissions:
                return self._replay_submission(session_id, state, key)

            try:
                correct = int(self.judge(problem, code))
            except JudgeUnavailable:
                raise
            except Exception as exc:
                raise JudgeUnavailable(f"judge failed: {exc}") from exc

            history = self._student_interactions(state.student_id)
            model_prob = float(self.predictor(history, problem))

            interaction = Interaction(
                student_id=state.student_id,
                question_id=problem.question_id,
                kc_id=problem.kc_id,
                kc_text=problem.kc_text,
                question_text=problem.question_text,
                answer_code=code,
                correct=correct,
                timestamp=int(self.clock() * 1000),
                language=problem.language,
            )
            next_problem = self._pick_problem(
                state.student_id, extra_attempted={problem.question_id}
            )
            self.store.append(session_id, make_event(SUBMITTED, {
                "idempotency_key": key,
                "interaction": interaction.to_dict(),
                "model_prob": model_prob,
                "next_problem": next_problem.to_dict(),
            }, self.clock()))

            if self.crash_hook:
                self.crash_hook("after_submit_persist")

            bundle = self._correctness_feedback(history, problem, code, correct, model_prob)
            self.store.append(session_id, make_event(FEEDBACK_RETURNED, {
                "idempotency_key": key,
                "bundle": bundle.to_dict(),
            }, self.clock()))
            return {
                "correct": correct,
                "model_prob": model_prob,
                "feedback": bundle.to_dict(),
                "replayed": False,
            }

    def _replay_submission(self, session_id: str, state: SessionState, key: str) -> dict:
        recorded = state.submissions[key]
        bundle_dict = state.feedback_by_key.get(key)
        if bundle_dict is None:
            # crashed between persisting the submission and its feedback:
            # regenerate now, append, and serve
            interaction = Interaction(**recorded["interaction"])
            problem = self.bank.by_id[interaction.question_id]
            history = [it for it in self._student_interactions(state.student_id)
                       if submission_hash(it.answer_code) != key]
            bundle = self._correctness_feedback(
                history, problem, interaction.answer_code,
                interaction.correct, recorded["model_prob"],
            )
            self.store.append(session_id, make_event(FEEDBACK_RETURNED, {
                "idempotency_key": key,
                "bundle": bundle.to_dict(),
            }, self.clock()))
            bundle_dict = bundle.to_dict()
        return {
            "correct": recorded["interaction"]["correct"],
            "model_prob": recorded["model_prob"],
            "feedback": bundle_dict,
            "replayed": True,
        }

    def request_hint(self, session_id: str) -> FeedbackBundle:
        with self._lock(session_id):
            state = self.get_session(session_id)
            if state.current_problem is None:
                raise ValidationError("session has no current problem")
            if state.current_problem["question_id"] in state.answered_question_ids:
                raise HintUnavailable("hint unavailable after submission")
            problem = Problem(**{**state.current_problem,
                                 "reference_solution": self._reference(state.current_problem)})
            history = self._student_interactions(state.student_id)
            model_prob = float(self.predictor(history, problem))
            ctx = self._context(history, problem, model_prob)
            prompt = build_hint_prompt(ctx, self.comparison)
            try:
                raw = generate_feedback(prompt, self.llm)
                bundle = parse_feedback(raw, mode="hint")
                bundle.comparison = self.comparison
            except (LlmError, FeedbackParseError):
                bundle = FeedbackBundle(
                    mode="hint",
                    components={"Positive feedback": FALLBACK_FEEDBACK},
                    raw_response="",
                    comparison=self.comparison,
                    degraded=True,
                )
            self.store.append(session_id, make_event(HINT_REQUESTED, {
                "bundle": bundle.to_dict(),
                "model_prob": model_prob,
            }, self.clock()))
            return bundle

    def get_history(self, session_id: str) -> dict:
        state = self.get_session(session_id)
        return {
            "session_id": state.session_id,
            "student_id": state.student_id,
            "interactions": list(state.history),
            "events": [
                {"event_type": e["event_type"], "timestamp": e["timestamp"]}
                for e in state.events
            ],
        }

    # -- helpers -------------------------------------------------------------

    def _reference(self, problem_dict: dict) -> str | None:
        known = self.bank.by_id.get(problem_dict["question_id"])
        return known.reference_solution if known else None

    def _context(
        self,
        history: Sequence[Interaction],
        problem: Problem,
        model_prob: float,
        code: str | None = None,
        correct: int | None = None,
    ) -> LearnerContext:
        prob = min(max(model_prob, 1e-4), 1 - 1e-4)
        ctx = LearnerContext(
            problem_text_past=[
                {"question_text": it.question_text or it.question_id, "correct": it.correct}
                for it in history
            ],
            problem_past_ids=[
                {"kc_id": it.kc_id, "question_id": it.question_id, "correct": it.correct}
                for it in history
            ],
            problem_text_present=problem.question_text,
            problem_present_ids={"kc_id": problem.kc_id, "question_id": problem.question_id},
            model_prob=prob,
        )
        if code is not None:
            ctx.response_code_present = code
            ctx.response_code_ast = extract_ast(code, problem.language)
            ctx.correctness = "Correct" if correct else "Incorrect"
        return ctx

    def _correctness_feedback(
        self,
        history: Sequence[Interaction],
        problem: Problem,
        code: str,
        correct: int,
        model_prob: float,
    ) -> FeedbackBundle:
        correctness = "Correct" if correct else "Incorrect"
        try:
            ctx = self._context(history, problem, model_prob, code=code, correct=correct)
            prompt = build_correctness_prompt(ctx, self.comparison)
            raw = generate_feedback(prompt, self.llm)
            bundle = parse_feedback(raw, mode="correctness", correctness=correctness)
            bundle.comparison = self.comparison
            return bundle
        except (LlmError, FeedbackParseError):
            return FeedbackBundle(
                mode="correctness",
                components={"Positive feedback": FALLBACK_FEEDBACK},
                raw_response="",
                comparison=self.comparison,
                degraded=True,
            )
