"""Feedback engine: prompt assembly, LLM calls, and response parsing."""

from .ast_extract import PARSE_SENTINEL, extract_ast
from .context import (
    CORRECTNESS_COMPONENTS,
    HINT_COMPONENTS,
    FeedbackBundle,
    LearnerContext,
    expected_components,
)
from .generation import generate_feedback
from .parsing import parse_feedback, render_bundle
from .prompts import (
    KNOWN_PLACEHOLDERS,
    TEMPLATE_ROOT,
    build_correctness_prompt,
    build_hint_prompt,
)

__all__ = [
    "PARSE_SENTINEL",
    "extract_ast",
    "CORRECTNESS_COMPONENTS",
    "HINT_COMPONENTS",
    "FeedbackBundle",
    "LearnerContext",
    "expected_components",
    "generate_feedback",
    "parse_feedback",
    "render_bundle",
    "KNOWN_PLACEHOLDERS",
    "TEMPLATE_ROOT",
    "build_correctness_prompt",
    "build_hint_prompt",
]
