"""Domain- and task-adaptive pretraining for the text encoder.

DAPT continues masked-token pretraining on a domain corpus: 15% of the
maskable tokens are selected, and each selected token is replaced with the
mask token 80% of the time, a random token 10%, and left unchanged 10%
(the standard BERT recipe). TAPT instead fine-tunes the full knowledge
tracing objective on a related source dataset and keeps only the encoder.

Every adapted encoder carries an append-only provenance chain recording
its base and each adaptation step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import InteractionLog, split_kfold
from .errors import DataFormatError, ValidationError
from .kt_model import AdamW, ToyTextEncoder, TrainConfig, _train_single
from .encoding import build_training_set

CORPUS_SOURCE_TAGS = ("java_code2text", "python_code2text", "metamath", "custom")

MASK_REPLACE = "mask_token"
RANDOM_REPLACE = "random_token"
KEEP = "unchanged"


@dataclass
class CorpusDocument:
    text: str
    source_tag: str = "custom"

    def __post_init__(self):
        if not self.text:
            raise ValidationError("corpus document text must be nonempty")
        if self.source_tag not in CORPUS_SOURCE_TAGS:
            raise ValidationError(
                f"source_tag must be one of {CORPUS_SOURCE_TAGS}, got {self.source_tag!r}"
            )


@dataclass
class MaskingPlan:
    """Which positions are masked, how each is replaced, and the original ids."""

    token_indices_masked: list[int]
    replacement: dict[int, str]
    labels: dict[int, int]
    corrupted_ids: np.ndarray = field(repr=False, default=None)


def mask_tokens(
    token_ids: Sequence[int],
    p: float = 0.15,
    seed: int = 0,
    special_positions: Sequence[int] = (),
    random_token_pool: tuple[int, int] | None = None,
) -> MaskingPlan:
    """Independently select each maskable token with probability ``p`` and
    apply the 80/10/10 replacement sub-policy. Deterministic under seed.

    ``random_token_pool`` is the half-open id range random replacements are
    drawn from; special positions (cls/sep/padding) are never selected.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    special = set(special_positions)
    maskable = [i for i in range(len(ids)) if i not in special]
    if len(maskable) < 1:
        raise ValidationError("sequence has no maskable tokens")

    rng = np.random.default_rng(seed)
    mask_id = 2  # ToyTextEncoder reserves id 2 for the mask token
    lo, hi = random_token_pool or (ToyTextEncoder.SPECIAL_BUDGET, 4096)

    corrupted = ids.copy()
    masked: list[int] = []
    replacement: dict[int, str] = {}
    labels: dict[int, int] = {}
    for i in maskable:
        if rng.random() >= p:
            continue
        masked.append(i)
        labels[i] = int(ids[i])
        u = rng.random()
        if u < 0.8:
            replacement[i] = MASK_REPLACE
            corrupted[i] = mask_id
        elif u < 0.9:
            replacement[i] = RANDOM_REPLACE
            corrupted[i] = int(rng.integers(lo, hi))
        else:
            replacement[i] = KEEP
    return MaskingPlan(
        token_indices_masked=masked,
        replacement=replacement,
        labels=labels,
        corrupted_ids=corrupted,
    )


def load_corpus(path: str | Path) -> list[CorpusDocument]:
    """Read a JSONL corpus of {text, source_tag} documents."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}", line=line_no) from exc
            if "text" not in obj:
                raise DataFormatError("missing required column 'text'", line=line_no)
            docs.append(CorpusDocument(text=obj["text"], source_tag=obj.get("source_tag", "custom")))
    return docs


def chunk_corpus(
    encoder: ToyTextEncoder,
    corpus: Sequence[CorpusDocument],
    window: int = 128,
) -> list[np.ndarray]:
    """Concatenate documents and cut fixed token windows framed by cls/sep."""
    cls_id = encoder.token_id(encoder.special_tokens.cls_token)
    sep_id = encoder.token_id(encoder.special_tokens.sep_token)
    stream: list[int] = []
    for doc in corpus:
        stream.extend(int(t) for t in encoder.tokenize(doc.text))
    chunks = []
    body = max(window - 2, 1)
    for start in range(0, len(stream), body):
        piece = stream[start:start + body]
        if piece:
            chunks.append(np.array([cls_id] + piece + [sep_id], dtype=np.int64))
    return chunks


@dataclass
class DaptHistory:
    epoch_losses: list[float]


def dapt(
    encoder: ToyTextEncoder,
    corpus: Sequence[CorpusDocument],
    epochs: int = 3,
    config: TrainConfig | None = None,
    masking_probability: float = 0.15,
    window: int = 128,
) -> tuple[ToyTextEncoder, DaptHistory]:
    """Continual masked-token pretraining; returns a new encoder artifact
    tagged with the corpus source and epoch count."""
    if not corpus:
        raise ValidationError("corpus must be nonempty")
    config = config or TrainConfig()
    source_tags = sorted({d.source_tag for d in corpus})
    adapted = encoder.with_provenance({
        "op": "dapt", "source_tag": source_tags, "epochs": epochs,
        "masking_probability": masking_probability,
    })
    history = DaptHistory(epoch_losses=[])
    if epochs == 0:
        return adapted, history

    chunks = chunk_corpus(adapted, corpus, window)
    optimizer = AdamW(config.learning_rate, config.weight_decay)
    params = adapted.parameters()
    rng = np.random.default_rng(config.seed)
    pool = (ToyTextEncoder.SPECIAL_BUDGET, adapted.vocab_size)

    for epoch in range(epochs):
        order = rng.permutation(len(chunks))
        losses = []
        for idx in order:
            ids = chunks[idx]
            plan = mask_tokens(
                ids, p=masking_probability, seed=int(rng.integers(2**31)),
                special_positions=(0, len(ids) - 1), random_token_pool=pool,
            )
            if not plan.token_indices_masked:
                continue
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            chunk_loss = 0.0
            for pos in plan.token_indices_masked:
                logits = adapted.mlm_logits_at(plan.corrupted_ids, pos)
                logits = logits - logits.max()
                log_z = np.log(np.sum(np.exp(logits)))
                label = plan.labels[pos]
                chunk_loss += log_z - logits[label]
                d_logits = np.exp(logits - log_z)
                d_logits[label] -= 1.0
                adapted.mlm_backward_at(
                    plan.corrupted_ids, pos, d_logits / len(plan.token_indices_masked), grads
                )
            optimizer.step(params, grads)
            losses.append(chunk_loss / len(plan.token_indices_masked))
        history.epoch_losses.append(float(np.mean(losses)) if losses else float("nan"))
    return adapted, history


def tapt(
    encoder: ToyTextEncoder,
    source_log: InteractionLog,
    config: TrainConfig,
    source_name: str = "source",
) -> ToyTextEncoder:
    """Fine-tune the knowledge-tracing objective on a source dataset, then
    strip the head and return the encoder for target fine-tuning.

    Uses a single split (no k-fold) with a 10% validation carve-out for
    early stopping, mirroring the fine-tuning regime.
    """
    adapted = encoder.with_provenance({"op": "tapt", "source": source_name})
    students = sorted(source_log.students)
    if len(students) < 2:
        raise ValidationError("TAPT source log needs at least 2 students")
    # single train/validation split by student, deterministic under seed
    import random as _random
    shuffled = list(students)
    _random.Random(config.seed).shuffle(shuffled)
    n_val = max(1, int(round(len(shuffled) * 0.1)))
    val_students, train_students = shuffled[:n_val], shuffled[n_val:]

    train_samples = build_training_set(
        source_log, config.token_budget, adapted.count_tokens, student_ids=train_students
    )
    val_samples = build_training_set(
        source_log, config.token_budget, adapted.count_tokens, student_ids=val_students
    )
    _train_single(adapted, train_samples, val_samples, config)
    return adapted  # head deliberately dropped
