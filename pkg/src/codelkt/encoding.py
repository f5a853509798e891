"""Render interaction histories into the masked-response token text.

Each sample is the space-joined concatenation
``[CLS] kc_1 q_1 r_1 ... kc_i q_i [MASK] [SEP]`` where the response slot of
the final (target) interaction is the encoder's mask token and earlier
responses are the [CORRECT]/[INCORRECT] special tokens. When the rendered
text exceeds the token budget, the OLDEST history interactions are dropped
first; the target triple is never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .data_model import Interaction, InteractionLog
from .errors import BudgetError, ValidationError

# Sentinel for the masked response slot in response_token().
MASK = "MASK"


@dataclass(frozen=True)
class SpecialTokens:
    correct_token: str = "[CORRECT]"
    incorrect_token: str = "[INCORRECT]"
    mask_token: str = "[MASK]"
    cls_token: str = "[CLS]"
    sep_token: str = "[SEP]"

    def __post_init__(self):
        five = {self.correct_token, self.incorrect_token, self.mask_token,
                self.cls_token, self.sep_token}
        if len(five) != 5:
            raise ValidationError("special tokens must be pairwise distinct")

    def all(self) -> tuple[str, ...]:
        return (self.cls_token, self.sep_token, self.mask_token,
                self.correct_token, self.incorrect_token)


@dataclass
class EncodedSample:
    """One rendered input text with its masked-slot label."""

    text: str
    label: int
    mask_char_offset: int
    interactions_included: int
    target_question_id: str

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "label": self.label,
            "mask_char_offset": self.mask_char_offset,
            "interactions_included": self.interactions_included,
            "target_question_id": self.target_question_id,
        }


def response_token(r, tokens: SpecialTokens = SpecialTokens()) -> str:
    """Map a response bit (or the MASK sentinel) to its token text."""
    if r == 1:
        return tokens.correct_token
    if r == 0:
        return tokens.incorrect_token
    if r is MASK or r == MASK:
        return tokens.mask_token
    raise ValidationError(f"response must be 0, 1, or MASK, got {r!r}")


def whitespace_token_count(text: str) -> int:
    """Fallback tokenizer probe: whitespace-delimited token count."""
    return len(text.split())


def _check_texts(kc_text: str, question_text: str, tokens: SpecialTokens) -> None:
    for special in tokens.all():
        if special in kc_text or special in question_text:
            raise ValidationError(
                f"interaction text must not contain the special token {special!r}"
            )


def _triple(it: Interaction, tokens: SpecialTokens) -> str:
    return f"{it.kc_text} {it.question_text} {response_token(it.correct, tokens)}"


def build_input(
    history: Sequence[Interaction],
    target: Interaction,
    token_budget: int,
    tokenizer_probe: Callable[[str], int] = whitespace_token_count,
    tokens: SpecialTokens = SpecialTokens(),
) -> EncodedSample:
    """Render one masked-prediction sample from a history and a target."""
    if not target.kc_text or not target.question_text:
        raise ValidationError(
            f"target interaction {target.question_id!r} is not enriched"
        )
    _check_texts(target.kc_text, target.question_text, tokens)
    for it in history:
        if not it.enriched:
            raise ValidationError(f"history interaction {it.question_id!r} is not enriched")
        _check_texts(it.kc_text, it.question_text, tokens)

    target_part = f"{target.kc_text} {target.question_text} {tokens.mask_token} {tokens.sep_token}"

    kept = list(history)
    while True:
        parts = [tokens.cls_token]
        parts += [_triple(it, tokens) for it in kept]
        parts.append(target_part)
        text = " ".join(parts)
        if tokenizer_probe(text) <= token_budget:
            break
        if not kept:
            raise BudgetError(
                f"target does not fit budget: needs {tokenizer_probe(text)} tokens, "
                f"budget is {token_budget}"
            )
        kept = kept[1:]  # drop the oldest interaction first

    return EncodedSample(
        text=text,
        label=target.correct,
        mask_char_offset=text.rindex(tokens.mask_token),
        interactions_included=len(kept),
        target_question_id=target.question_id,
    )


def build_training_set(
    log: InteractionLog,
    token_budget: int,
    tokenizer_probe: Callable[[str], int] = whitespace_token_count,
    tokens: SpecialTokens = SpecialTokens(),
    student_ids: Sequence[str] | None = None,
) -> list[EncodedSample]:
    """One sample per interaction: the i-th uses interactions 1..i-1 as history.

    Students are visited in sorted order so the output is stable regardless
    of ingestion order; optionally restricted to a student subset.
    """
    wanted = sorted(log.students) if student_ids is None else sorted(set(student_ids) & set(log.students))
    samples = []
    for sid in wanted:
        seq = log.students[sid]
        for i, target in enumerate(seq):
            if not target.enriched:
                raise ValidationError(
                    f"interaction not enriched: student {sid!r}, question {target.question_id!r}"
                )
            samples.append(build_input(seq[:i], target, token_budget, tokenizer_probe, tokens))
    return samples
