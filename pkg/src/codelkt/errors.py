"""Exception types shared across the package.

Every domain failure raises a subclass of CodeLktError so the CLI can map
them to exit code 1 and the HTTP layer to structured error bodies.
"""


class CodeLktError(Exception):
    """Base class for all domain errors."""

    code = "error"

    def __init__(self, message: str, detail: str | None = None):
        super().__init__(message)
        self.message = message
        self.detail = detail


class DataFormatError(CodeLktError):
    """Input file failed to parse or validate."""

    code = "data_format"

    def __init__(self, message: str, line: int | None = None, detail: str | None = None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message, detail)
        self.line = line


class ValidationError(CodeLktError):
    """A domain invariant was violated."""

    code = "validation"


class BudgetError(CodeLktError):
    """Token budget cannot accommodate the requested input."""

    code = "budget"


class LlmError(CodeLktError):
    """LLM provider failure after exhausting retries."""

    code = "llm"

    def __init__(self, message: str, status: int | None = None, attempts: int = 0):
        super().__init__(message, detail=f"status={status} attempts={attempts}")
        self.status = status
        self.attempts = attempts


class TemplateError(CodeLktError):
    """Prompt template is malformed or a placeholder value is missing."""

    code = "template"


class FeedbackParseError(CodeLktError):
    """LLM response did not contain any recognizable feedback component."""

    code = "feedback_parse"

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message, detail=raw[:500])
        self.raw = raw


class SessionNotFound(CodeLktError):
    """Unknown session id."""

    code = "session_not_found"


class HintUnavailable(CodeLktError):
    """Hint requested after the current problem was already submitted."""

    code = "hint_unavailable"


class JudgeUnavailable(CodeLktError):
    """The code judge could not be reached; nothing was persisted."""

    code = "judge_unavailable"


class EnrichmentError(CodeLktError):
    """Enrichment aborted partway; a resume checkpoint was written."""

    code = "enrichment"

    def __init__(self, message: str, checkpoint_path: str | None = None):
        super().__init__(message, detail=checkpoint_path)
        self.checkpoint_path = checkpoint_path
