"""Question and KC text generation from student code via an LLM.

Every LLM response is memoized in a content-addressed cache keyed by
(template id, model name, input text), so enrichment is deterministic and
re-runs are free. Stub clients make the whole pipeline runnable offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import string
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import httpx

from .data_model import InteractionLog, with_enrichment
from .errors import EnrichmentError, LlmError, TemplateError, ValidationError

QUESTION_MAX_CHARS = 200
KC_MAX_WORDS = 8

PLACEHOLDER_RE = re.compile(r"\{([A-Za-z][A-Za-z0-9 _]*)\}")

# Default enrichment prompts; shipped as explicit assets next to this module
# so they are reviewable files rather than hidden constants.
TEMPLATE_DIR = Path(__file__).parent / "textualization_templates"


@dataclass
class LlmClientConfig:
    provider_endpoint: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4o"
    temperature: float = 0.0
    max_output_tokens: int = 256
    api_key_env_var: str = "CODELKT_API_KEY"
    request_timeout: float = 30.0
    max_retries: int = 2
    max_input_tokens: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")


class LlmClient(Protocol):
    config: LlmClientConfig

    def complete(self, prompt: str) -> str: ...


class HttpLlmClient:
    """OpenAI-style chat-completions client with retry/backoff."""

    def __init__(self, config: LlmClientConfig):
        self.config = config

    def complete(self, prompt: str) -> str:
        cfg = self.config
        if cfg.max_input_tokens is not None and len(prompt.split()) > cfg.max_input_tokens:
            raise LlmError(
                f"prompt exceeds the provider input limit of {cfg.max_input_tokens} tokens",
                status=None, attempts=0,
            )
        api_key = os.environ.get(cfg.api_key_env_var, "")
        payload = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
            "messages": [{"role": "user", "content": prompt}],
        }
        last_status = None
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = httpx.post(
                    cfg.provider_endpoint,
                    json=payload,
                    headers={"Authorization": f"Bearer {api_key}"},
                    timeout=cfg.request_timeout,
                )
                last_status = resp.status_code
                if resp.status_code == 200:
                    return resp.json()["choices"][0]["message"]["content"]
            except httpx.HTTPError:
                last_status = None
            if attempt < cfg.max_retries:
                time.sleep(min(2.0 ** attempt, 8.0))
        raise LlmError(
            f"LLM call failed after {cfg.max_retries + 1} attempts",
            status=last_status, attempts=cfg.max_retries + 1,
        )


class StubLlmClient:
    """Offline stand-in: canned responses by exact prompt, by prompt hash
    (files in a fixture directory), or a deterministic fallback function."""

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        fixture_dir: str | Path | None = None,
        default=None,
        config: LlmClientConfig | None = None,
    ):
        self.responses = dict(responses or {})
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.default = default
        self.config = config or LlmClientConfig(model_name="stub")
        self.calls: list[str] = []

    @staticmethod
    def prompt_key(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        if prompt in self.responses:
            return self.responses[prompt]
        if self.fixture_dir is not None:
            path = self.fixture_dir / f"{self.prompt_key(prompt)}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
            fallback = self.fixture_dir / "default.txt"
            if fallback.exists():
                return fallback.read_text(encoding="utf-8")
        if self.default is not None:
            return self.default(prompt)
        raise LlmError("stub has no response for this prompt", attempts=1)


def deterministic_stub(config: LlmClientConfig | None = None) -> StubLlmClient:
    """Stub whose outputs are a pure function of the prompt, for offline runs."""

    def synthesize(prompt: str) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        if "knowledge concept" in prompt.lower():
            return f"concept {digest[:4]}"
        return f"Write a program matching reference solution {digest[:8]}."

    return StubLlmClient(default=synthesize, config=config)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    placeholder_names: frozenset[str]

    def __post_init__(self):
        found = set(PLACEHOLDER_RE.findall(self.body))
        if found != set(self.placeholder_names):
            raise TemplateError(
                f"template {self.template_id!r}: declared placeholders "
                f"{sorted(self.placeholder_names)} != found {sorted(found)}"
            )

    @classmethod
    def from_text(cls, template_id: str, body: str) -> "PromptTemplate":
        return cls(template_id, body, frozenset(PLACEHOLDER_RE.findall(body)))

    @classmethod
    def from_file(cls, path: str | Path, template_id: str | None = None) -> "PromptTemplate":
        path = Path(path)
        return cls.from_text(template_id or path.stem, path.read_text(encoding="utf-8"))

    def render(self, **values: str) -> str:
        missing = self.placeholder_names - set(values)
        if missing:
            raise TemplateError(
                f"template {self.template_id!r}: missing value for {sorted(missing)}"
            )
        out = self.body
        for name in self.placeholder_names:
            out = out.replace("{" + name + "}", str(values[name]))
        return out


def default_templates() -> dict[str, PromptTemplate]:
    return {
        "question": PromptTemplate.from_file(TEMPLATE_DIR / "question.txt", "question"),
        "kc": PromptTemplate.from_file(TEMPLATE_DIR / "kc.txt", "kc"),
    }


def load_templates(directory: str | Path) -> dict[str, PromptTemplate]:
    templates = {}
    for path in sorted(Path(directory).glob("*.txt")):
        templates[path.stem] = PromptTemplate.from_file(path)
    for required in ("question", "kc"):
        if required not in templates:
            raise TemplateError(f"template directory is missing {required}.txt")
    return templates


class EnrichmentCache:
    """Content-addressed memo of LLM outputs; entries are immutable.

    Optionally backed by a single directory where each entry is a file named
    by its hex key. Safe for concurrent use; writes to an existing key are
    ignored (values are deterministic, so collisions are benign).
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._mem: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.directory:
            for path in self.directory.iterdir():
                if path.is_file():
                    self._mem[path.name] = path.read_text(encoding="utf-8")

    @staticmethod
    def key(template_id: str, model_name: str, input_text: str) -> str:
        payload = "\x1f".join((template_id, model_name, input_text))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def get(self, template_id: str, model_name: str, input_text: str) -> str | None:
        return self._mem.get(self.key(template_id, model_name, input_text))

    def put(self, template_id: str, model_name: str, input_text: str, value: str) -> None:
        k = self.key(template_id, model_name, input_text)
        with self._lock:
            if k in self._mem:
                return
            self._mem[k] = value
            if self.directory:
                (self.directory / k).write_text(value, encoding="utf-8")

    def __len__(self) -> int:
        return len(self._mem)

    def keys(self) -> set[str]:
        return set(self._mem)


def _cached_completion(
    template: PromptTemplate,
    llm: LlmClient,
    cache: EnrichmentCache,
    input_text: str,
    **render_args: str,
) -> str:
    hit = cache.get(template.template_id, llm.config.model_name, input_text)
    if hit is not None:
        return hit
    raw = llm.complete(template.render(**render_args))
    cache.put(template.template_id, llm.config.model_name, input_text, raw)
    return raw


def truncate_at_word_boundary(text: str, limit: int) -> str:
    """Longest prefix of at most ``limit`` chars not splitting a word."""
    if len(text) <= limit:
        return text
    cut = text[:limit]
    if not text[limit].isspace() and " " in cut.strip():
        cut = cut[:cut.rstrip().rfind(" ")]
    return cut.rstrip()


@dataclass
class GeneratedQuestion:
    text: str
    truncated: bool = False


def generate_question(
    answer_code: str,
    template: PromptTemplate,
    llm: LlmClient,
    cache: EnrichmentCache,
) -> GeneratedQuestion:
    """Produce a question statement for a piece of student code, at most
    200 characters. Over-length output gets one reprompt, then a hard
    truncation at a word boundary with the record tagged ``truncated``."""
    if not answer_code:
        raise ValidationError("answer_code must be nonempty")
    raw = _cached_completion(template, llm, cache, answer_code, code=answer_code).strip()
    if len(raw) <= QUESTION_MAX_CHARS:
        return GeneratedQuestion(text=raw)

    shorten = PromptTemplate.from_text(
        template.template_id + "/shorten",
        "Shorten the following problem statement to at most 200 characters,"
        " keeping its meaning: {text}",
    )
    retry = _cached_completion(shorten, llm, cache, raw, text=raw).strip()
    if len(retry) <= QUESTION_MAX_CHARS:
        return GeneratedQuestion(text=retry)
    return GeneratedQuestion(
        text=truncate_at_word_boundary(retry, QUESTION_MAX_CHARS), truncated=True
    )


def normalize_kc(raw_label: str) -> str:
    """Lowercased, punctuation-stripped, whitespace-collapsed KC key."""
    if not raw_label:
        raise ValidationError("raw_label must be nonempty")
    cleaned = raw_label.lower().translate(
        str.maketrans({ch: " " for ch in string.punctuation})
    )
    return " ".join(cleaned.split())


def generate_kc(
    question_text: str,
    template: PromptTemplate,
    llm: LlmClient,
    cache: EnrichmentCache,
) -> str:
    """Produce a short noun-phrase KC label for a question (at most 8 words
    after normalization)."""
    if not question_text:
        raise ValidationError("question_text must be nonempty")
    raw = _cached_completion(template, llm, cache, question_text, question=question_text)
    label = raw.strip().strip('"').strip()
    words = normalize_kc(label).split()
    if len(words) > KC_MAX_WORDS:
        label = " ".join(label.split()[:KC_MAX_WORDS])
    return label


def enrich_log(
    log: InteractionLog,
    templates: dict[str, PromptTemplate],
    llm: LlmClient,
    cache: EnrichmentCache,
    checkpoint_path: str | Path | None = None,
    max_concurrency: int = 1,
) -> InteractionLog:
    """Populate question_text/kc_text for every interaction.

    Generation runs once per distinct question (the first attempt's code
    stands in for the question) and is shared by all attempts. Already
    enriched interactions are left untouched, so the operation is
    idempotent. On partial failure a checkpoint file listing the completed
    question ids is written and the error re-raised; the cache makes the
    rerun resume where it stopped.
    """
    pending: dict[str, str] = {}
    for it in log.interactions():
        if not it.enriched and it.question_id not in pending:
            pending[it.question_id] = it.answer_code
    if not pending:
        return log

    results: dict[str, tuple[str, str]] = {}
    completed: list[str] = []

    def enrich_one(question_id: str, code: str) -> tuple[str, str, str]:
        question = generate_question(code, templates["question"], llm, cache)
        kc_text = generate_kc(question.text, templates["kc"], llm, cache)
        return question_id, question.text, kc_text

    try:
        if max_concurrency > 1:
            with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
                for qid, qtext, kc_text in pool.map(
                    lambda item: enrich_one(*item), pending.items()
                ):
                    results[qid] = (qtext, kc_text)
                    completed.append(qid)
        else:
            for qid, code in pending.items():
                qid, qtext, kc_text = enrich_one(qid, code)
                results[qid] = (qtext, kc_text)
                completed.append(qid)
    except Exception as exc:
        if checkpoint_path is not None:
            Path(checkpoint_path).write_text(
                json.dumps({"completed_question_ids": sorted(completed)}, indent=2)
            )
        raise EnrichmentError(
            f"enrichment failed after {len(completed)}/{len(pending)} questions: {exc}",
            checkpoint_path=str(checkpoint_path) if checkpoint_path else None,
        ) from exc

    enriched = []
    for it in log.interactions():
        if it.enriched:
            enriched.append(it)
        else:
            qtext, kc_text = results[it.question_id]
            enriched.append(with_enrichment(it, normalize_kc(kc_text), kc_text, qtext))
    return InteractionLog.from_interactions(enriched, metadata=dict(log.metadata))
