"""Split raw LLM feedback into the named output-form components.

Headings are matched fuzzily: numbering is optional, matching is
case-insensitive, and a trailing colon is allowed. Text that follows no
recognized heading attaches to the nearest preceding component. A "Next
challenge" section produced for an incorrect submission is relabeled as
overflow and the bundle flagged as a protocol violation.
"""

from __future__ import annotations

import re

from ..errors import FeedbackParseError
from .context import FeedbackBundle, expected_components

_HEADING_PREFIX = re.compile(r"^\s*(?:#+\s*)?(?:\d+[.)]\s*)?")


def _match_heading(line: str, names: tuple[str, ...]) -> tuple[str, str] | None:
    """(component name, same-line remainder) if the line opens a component."""
    stripped = _HEADING_PREFIX.sub("", line).strip()
    stripped = stripped.strip("*")  # tolerate markdown bold around the name
    for name in names:
        if stripped.lower() == name.lower() or stripped.lower() == name.lower() + ":":
            return name, ""
        prefix = name.lower() + ":"
        if stripped.lower().startswith(prefix):
            return name, stripped[len(prefix):].strip()
    return None


def parse_feedback(raw: str, mode: str, correctness: str | None = None) -> FeedbackBundle:
    """Parse an LLM response into a FeedbackBundle for the given mode."""
    if not raw or not raw.strip():
        raise FeedbackParseError("empty feedback response", raw=raw)
    names = expected_components(mode)

    components: dict[str, list[str]] = {}
    order: list[str] = []
    current: str | None = None
    preamble: list[str] = []
    for line in raw.splitlines():
        hit = _match_heading(line, names)
        if hit is not None:
            name, remainder = hit
            current = name
            if name not in components:
                components[name] = []
                order.append(name)
            if remainder:
                components[name].append(remainder)
        elif current is not None:
            components[current].append(line)
        else:
            preamble.append(line)

    if not components:
        raise FeedbackParseError(
            f"no recognizable {mode} components in response", raw=raw
        )
    if preamble and any(l.strip() for l in preamble):
        components[order[0]] = preamble + components[order[0]]

    cleaned = {name: "\n".join(lines).strip() for name, lines in components.items()}

    violation = False
    if mode == "correctness" and correctness == "Incorrect" and "Next challenge" in cleaned:
        overflow = cleaned.pop("Next challenge")
        cleaned["overflow"] = overflow
        violation = True

    return FeedbackBundle(
        mode=mode,
        components=cleaned,
        raw_response=raw,
        protocol_violation=violation,
    )


def render_bundle(bundle: FeedbackBundle) -> str:
    """Join components back under numbered headings (inverse of parsing
    for well-formed bundles)."""
    parts = []
    for i, (name, text) in enumerate(bundle.components.items(), start=1):
        parts.append(f"{i}. {name}\n{text}")
    return "\n".join(parts)
