"""Context and result types for the feedback engine.

A LearnerContext carries everything the prompt templates interpolate; a
FeedbackBundle is the parsed, component-addressed LLM response.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ValidationError

CORRECTNESS_COMPONENTS = (
    "Positive feedback",
    "Analysis about the answer",
    "Correction of the answer / Tips for improvement",
    "Next challenge",
    "comments for cheering up",
)

HINT_COMPONENTS = (
    "Positive feedback",
    "Related past history",
    "Similar problems",
    "Key notions of the problem",
)

COMPARISONS = ("c1", "c2", "c3")
MODES = ("correctness", "hint")


@dataclass
class LearnerContext:
    """Inputs for one feedback generation.

    Text-form problem history feeds comparisons 1 and 3; the ID-form lists
    feed comparison 2. In hint mode the submission-specific fields
    (code, AST, correctness) must be absent.
    """

    problem_text_past: list[dict] = field(default_factory=list)   # {question_text, correct}
    problem_past_ids: list[dict] = field(default_factory=list)    # {kc_id, question_id, correct}
    problem_text_present: str = ""
    problem_present_ids: dict = field(default_factory=dict)       # {kc_id, question_id}
    model_prob: float = 0.5
    response_code_present: str | None = None
    response_code_ast: str | None = None
    correctness: str | None = None

    def __post_init__(self):
        if not 0.0 < self.model_prob < 1.0:
            raise ValidationError(f"model_prob must be in (0,1), got {self.model_prob}")
        if self.correctness is not None and self.correctness not in ("Correct", "Incorrect"):
            raise ValidationError(
                f"correctness must be 'Correct' or 'Incorrect', got {self.correctness!r}"
            )

    def require_correctness_mode(self) -> None:
        missing = [name for name in ("response_code_present", "response_code_ast", "correctness")
                   if getattr(self, name) is None]
        if missing:
            raise ValidationError(f"correctness mode requires {missing}")

    def require_hint_mode(self) -> None:
        present = [name for name in ("response_code_present", "response_code_ast", "correctness")
                   if getattr(self, name) is not None]
        if present:
            raise ValidationError(
                f"hint mode must not carry submission fields, found {present}"
            )

    @classmethod
    def from_dict(cls, raw: dict) -> "LearnerContext":
        return cls(
            problem_text_past=list(raw.get("problem_text_past", [])),
            problem_past_ids=list(raw.get("problem_past_ids", [])),
            problem_text_present=raw.get("problem_text_present", ""),
            problem_present_ids=dict(raw.get("problem_present_ids", {})),
            model_prob=float(raw.get("model_prob", 0.5)),
            response_code_present=raw.get("response_code_present"),
            response_code_ast=raw.get("response_code_ast"),
            correctness=raw.get("correctness"),
        )


@dataclass
class FeedbackBundle:
    """Structured feedback: the raw LLM text split into named components."""

    mode: str
    components: dict[str, str]
    raw_response: str
    comparison: str = "c1"
    protocol_violation: bool = False
    degraded: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.comparison not in COMPARISONS:
            raise ValidationError(
                f"comparison must be one of {COMPARISONS}, got {self.comparison!r}"
            )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "comparison": self.comparison,
            "components": dict(self.components),
            "raw_response": self.raw_response,
            "protocol_violation": self.protocol_violation,
            "degraded": self.degraded,
        }


def expected_components(mode: str) -> tuple[str, ...]:
    return CORRECTNESS_COMPONENTS if mode == "correctness" else HINT_COMPONENTS
