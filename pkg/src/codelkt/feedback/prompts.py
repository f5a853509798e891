"""Prompt assembly for the three comparison setups.

Templates live as versioned text assets under templates/{mode}/{cN}.txt
with {Placeholder} markers. Rendering substitutes values verbatim and
fails hard if any known placeholder survives in the output.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import TemplateError
from .context import LearnerContext

TEMPLATE_ROOT = Path(__file__).parent / "templates"

KNOWN_PLACEHOLDERS = (
    "{Problem Text Past}",
    "{Problem Text Present}",
    "{Problem Past}",
    "{Problem Present}",
    "{Response Code Present}",
    "{Response Code AST}",
    "{Model Prob}",
    "{Correctness}",
)


def template_path(mode: str, comparison: str, root: Path | None = None) -> Path:
    return (root or TEMPLATE_ROOT) / mode / f"{comparison}.txt"


def load_template(mode: str, comparison: str, root: Path | None = None) -> str:
    path = template_path(mode, comparison, root)
    if not path.exists():
        raise TemplateError(f"no template for mode={mode!r} comparison={comparison!r} at {path}")
    return path.read_text(encoding="utf-8")


def render_text_past(entries: list[dict]) -> str:
    if not entries:
        return "(none)"
    lines = []
    for e in entries:
        result = "Correct" if e["correct"] else "Incorrect"
        lines.append(f"- ['{e['question_text']}', '{result}']")
    return "\n".join(lines)


def render_id_past(entries: list[dict]) -> str:
    if not entries:
        return "(none)"
    lines = []
    for e in entries:
        result = "Correct" if e["correct"] else "Incorrect"
        lines.append(f"- ['{e['kc_id']}', '{e['question_id']}', '{result}']")
    return "\n".join(lines)


def render_id_present(present: dict) -> str:
    return f"['{present['kc_id']}', '{present['question_id']}']"


def _substitute(body: str, values: dict[str, str]) -> str:
    out = body
    for name, value in values.items():
        out = out.replace("{" + name + "}", value)
    leftover = [ph for ph in KNOWN_PLACEHOLDERS if ph in out]
    if leftover:
        raise TemplateError(f"unresolved placeholders in rendered prompt: {leftover}")
    return out


def _comparison_values(ctx: LearnerContext, comparison: str, mode: str) -> dict[str, str]:
    values: dict[str, str] = {"Model Prob": f"{ctx.model_prob:.4f}"}
    if comparison == "c2":
        if not ctx.problem_present_ids:
            raise TemplateError("comparison c2 requires problem_present_ids")
        values["Problem Past"] = render_id_past(ctx.problem_past_ids)
        values["Problem Present"] = render_id_present(ctx.problem_present_ids)
    else:
        if not ctx.problem_text_present:
            raise TemplateError(f"comparison {comparison} requires problem_text_present")
        values["Problem Text Past"] = render_text_past(ctx.problem_text_past)
        values["Problem Text Present"] = ctx.problem_text_present
    if mode == "correctness":
        values["Response Code Present"] = ctx.response_code_present
        values["Response Code AST"] = ctx.response_code_ast
        values["Correctness"] = ctx.correctness
    return values


def build_correctness_prompt(ctx: LearnerContext, comparison: str = "c1",
                             template_root: Path | None = None) -> str:
    """Render the post-submission feedback prompt for the given comparison."""
    ctx.require_correctness_mode()
    body = load_template("correctness", comparison, template_root)
    return _substitute(body, _comparison_values(ctx, comparison, "correctness"))


def build_hint_prompt(ctx: LearnerContext, comparison: str = "c1",
                      template_root: Path | None = None) -> str:
    """Render the pre-submission hint prompt for the given comparison."""
    ctx.require_hint_mode()
    body = load_template("hint", comparison, template_root)
    return _substitute(body, _comparison_values(ctx, comparison, "hint"))
