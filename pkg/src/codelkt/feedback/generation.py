"""LLM call wrapper for feedback generation: pre-flight size check,
retries via the client, and request/response logging to a caller-supplied
sink (the session event store in the service)."""

from __future__ import annotations

from typing import Callable

from ..errors import LlmError, ValidationError
from ..textualization import LlmClient


def generate_feedback(
    prompt: str,
    llm: LlmClient,
    log_sink: Callable[[dict], None] | None = None,
    token_counter: Callable[[str], int] = lambda text: len(text.split()),
) -> str:
    """Send the rendered prompt and return the provider's raw text."""
    if not prompt:
        raise ValidationError("prompt must be nonempty")
    limit = llm.config.max_input_tokens
    if limit is not None and token_counter(prompt) > limit:
        raise LlmError(
            f"prompt has {token_counter(prompt)} tokens, over the provider limit of {limit}",
            attempts=0,
        )
    try:
        response = llm.complete(prompt)
    except LlmError as exc:
        if log_sink:
            log_sink({"event": "llm_error", "prompt": prompt, "error": str(exc),
                      "attempts": exc.attempts})
        raise
    if log_sink:
        log_sink({"event": "llm_call", "prompt": prompt, "response": response})
    return response
