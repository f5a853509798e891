"""The knowledge-tracing predictor: pluggable text encoder, linear+sigmoid
head over the masked response slot, BCE training with AdamW and early
stopping on validation AUC.

The built-in ToyTextEncoder is a deterministic desk-scale encoder (seeded
feature hashing into a trainable embedding table, distance-decayed context
pooling) so the full train/eval path runs in seconds on a CPU. Pre-trained
checkpoints can be slotted in through the same interface.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .data_model import FoldSplit, Interaction, InteractionLog
from .encoding import EncodedSample, SpecialTokens, build_input, build_training_set
from .errors import ValidationError
from .evaluation import acc as acc_metric
from .evaluation import auc as auc_metric


@runtime_checkable
class EncoderInterface(Protocol):
    """Behavior contract every encoder implementation must satisfy."""

    dim: int

    def encode(self, text: str) -> tuple[np.ndarray, list[tuple[int, int]]]:
        """Hidden vectors (n_tokens, dim) and character spans per token."""
        ...

    def mask_position(self, text: str) -> int:
        ...

    def add_special_tokens(self, tokens: Sequence[str]) -> None:
        ...

    def count_tokens(self, text: str) -> int:
        ...


@dataclass
class PreparedSample:
    """Tokenized sample ready for repeated forward passes."""

    ids: np.ndarray
    readout_pos: int
    label: int


class ToyTextEncoder:
    """Deterministic hashing encoder with a trainable embedding table.

    The hidden state at position p mixes the token's own embedding with a
    distance-decayed mean over the whole sequence, so the readout at the
    mask position is dominated by the adjacent target triple while older
    history still contributes.
    """

    SPECIAL_BUDGET = 16  # reserved id slots at the front of the table

    def __init__(
        self,
        dim: int = 32,
        vocab_size: int = 4096,
        seed: int = 0,
        self_weight: float = 0.5,
        decay: float = 0.6,
        special_tokens: SpecialTokens = SpecialTokens(),
        provenance: list[dict] | None = None,
    ):
        self.dim = dim
        self.vocab_size = vocab_size
        self.seed = seed
        self.self_weight = self_weight
        self.decay = decay
        self.special_tokens = special_tokens
        self.provenance = provenance or [{"op": "base", "encoder": "toy", "seed": seed}]
        self._special_ids: dict[str, int] = {}
        rng = np.random.default_rng(seed)
        self.embeddings = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(vocab_size, dim))
        self.add_special_tokens(special_tokens.all())

    # -- vocabulary ------------------------------------------------------

    def add_special_tokens(self, tokens: Sequence[str]) -> None:
        for tok in tokens:
            if tok in self._special_ids:
                continue
            if len(self._special_ids) >= self.SPECIAL_BUDGET:
                raise ValidationError("special-token budget exhausted")
            self._special_ids[tok] = len(self._special_ids)

    def token_id(self, token: str) -> int:
        sid = self._special_ids.get(token)
        if sid is not None:
            return sid
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, key=str(self.seed).encode()
        ).digest()
        bucket = int.from_bytes(digest, "big") % (self.vocab_size - self.SPECIAL_BUDGET)
        return self.SPECIAL_BUDGET + bucket

    def tokenize(self, text: str) -> np.ndarray:
        return np.array([self.token_id(t) for t in text.split()], dtype=np.int64)

    def count_tokens(self, text: str) -> int:
        return len(text.split())

    # -- forward ---------------------------------------------------------

    def _position_weights(self, n: int, pos: int) -> np.ndarray:
        w = self.decay ** np.abs(np.arange(n) - pos)
        return w / w.sum()

    def hidden_at(self, ids: np.ndarray, pos: int) -> np.ndarray:
        w = self._position_weights(len(ids), pos)
        context = w @ self.embeddings[ids]
        return self.self_weight * self.embeddings[ids[pos]] + (1 - self.self_weight) * context

    def encode(self, text: str) -> tuple[np.ndarray, list[tuple[int, int]]]:
        ids = self.tokenize(text)
        hidden = np.stack([self.hidden_at(ids, p) for p in range(len(ids))])
        spans = []
        offset = 0
        for tok in text.split():
            start = text.index(tok, offset)
            spans.append((start, start + len(tok)))
            offset = start + len(tok)
        return hidden, spans

    def mask_position(self, text: str) -> int:
        toks = text.split()
        return toks.index(self.special_tokens.mask_token)

    # -- training hooks --------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        return {"encoder.embeddings": self.embeddings}

    def backward_at(
        self, ids: np.ndarray, pos: int, d_hidden: np.ndarray, grads: dict[str, np.ndarray]
    ) -> None:
        """Accumulate d(loss)/d(embeddings) for one sample's readout."""
        g = grads["encoder.embeddings"]
        w = self._position_weights(len(ids), pos)
        np.add.at(g, ids, (1 - self.self_weight) * np.outer(w, d_hidden))
        g[ids[pos]] += self.self_weight * d_hidden

    # -- masked-token head (used by domain adaptation) ---------------------

    def mlm_logits_at(self, ids: np.ndarray, pos: int) -> np.ndarray:
        """Vocabulary logits for the token at ``pos`` (tied output weights)."""
        return self.embeddings @ self.hidden_at(ids, pos)

    def mlm_backward_at(
        self,
        ids: np.ndarray,
        pos: int,
        d_logits: np.ndarray,
        grads: dict[str, np.ndarray],
    ) -> None:
        h = self.hidden_at(ids, pos)
        g = grads["encoder.embeddings"]
        g += np.outer(d_logits, h)  # output side of the tied weights
        d_hidden = self.embeddings.T @ d_logits
        self.backward_at(ids, pos, d_hidden, grads)

    # -- lifecycle ---------------------------------------------------------

    def clone(self) -> "ToyTextEncoder":
        dup = copy.copy(self)
        dup.embeddings = self.embeddings.copy()
        dup._special_ids = dict(self._special_ids)
        dup.provenance = [dict(p) for p in self.provenance]
        return dup

    def with_provenance(self, entry: dict) -> "ToyTextEncoder":
        dup = self.clone()
        dup.provenance.append(entry)
        return dup

    def describe(self) -> dict:
        return {
            "type": "toy",
            "dim": self.dim,
            "vocab_size": self.vocab_size,
            "seed": self.seed,
            "self_weight": self.self_weight,
            "decay": self.decay,
            "provenance": self.provenance,
        }


@dataclass
class PredictionHead:
    """Linear readout: probability = sigmoid(weight . hidden + bias)."""

    weight: np.ndarray
    bias: float

    @classmethod
    def zeros(cls, dim: int) -> "PredictionHead":
        # Zero init keeps the initial output at 0.5, so early rankings come
        # from learned signal rather than initialization noise.
        return cls(weight=np.zeros(dim, dtype=np.float64), bias=0.0)

    def check_dim(self, dim: int) -> None:
        if self.weight.shape != (dim,):
            raise ValidationError(
                f"head dimension {self.weight.shape} does not match encoder dim {dim}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.isfinite(self.bias)):
            raise ValidationError("head parameters must be finite")


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    weight_decay: float = 0.01
    max_epochs: int = 100
    early_stop_patience: int = 10
    effective_batch_size: int = 512
    accumulation_steps: int = 8
    seed: int = 0
    label_clamp_epsilon: float = 1e-7
    token_budget: int = 512
    pooling: str = "mask"  # or "cls"
    freeze_encoder: bool = False

    def __post_init__(self):
        for name in ("learning_rate", "weight_decay", "max_epochs", "early_stop_patience",
                     "effective_batch_size", "accumulation_steps", "label_clamp_epsilon",
                     "token_budget"):
            if getattr(self, name) <= 0 and name != "weight_decay":
                raise ValidationError(f"{name} must be positive")
        if self.effective_batch_size % self.accumulation_steps != 0:
            raise ValidationError(
                "effective_batch_size must equal per-step batch x accumulation_steps"
            )
        if self.pooling not in ("mask", "cls"):
            raise ValidationError(f"pooling must be 'mask' or 'cls', got {self.pooling!r}")

    @property
    def per_step_batch(self) -> int:
        return self.effective_batch_size // self.accumulation_steps


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def prepare_samples(
    samples: Sequence[EncodedSample],
    encoder,
    pooling: str = "mask",
) -> list[PreparedSample]:
    prepared = []
    for s in samples:
        ids = encoder.tokenize(s.text)
        pos = 0 if pooling == "cls" else encoder.mask_position(s.text)
        prepared.append(PreparedSample(ids=ids, readout_pos=pos, label=s.label))
    return prepared


def forward(
    samples: Sequence[EncodedSample] | Sequence[PreparedSample],
    encoder,
    head: PredictionHead,
    pooling: str = "mask",
) -> np.ndarray:
    """Probabilities in (0,1), one per sample, read out at the mask slot."""
    head.check_dim(encoder.dim)
    if samples and isinstance(samples[0], EncodedSample):
        samples = prepare_samples(samples, encoder, pooling)
    z = np.array([
        head.weight @ encoder.hidden_at(p.ids, p.readout_pos) + head.bias
        for p in samples
    ])
    return sigmoid(z)


def bce_loss(probabilities: np.ndarray, labels: np.ndarray, epsilon: float = 1e-7) -> float:
    """Mean binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    p = np.asarray(probabilities, dtype=np.float64)
    r = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise ValidationError("bce_loss undefined on an empty batch")
    p = np.clip(p, epsilon, 1.0 - epsilon)
    return float(-np.mean(r * np.log(p) + (1.0 - r) * np.log(1.0 - p)))


def loss_and_grads(
    batch: Sequence[PreparedSample],
    encoder,
    head: PredictionHead,
    epsilon: float = 1e-7,
    freeze_encoder: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    """Analytic gradients of bce_loss(forward(batch)) wrt head and encoder
    parameters. The finite-difference check in the test suite is the
    independent oracle for this path."""
    n = len(batch)
    grads = {
        "head.weight": np.zeros_like(head.weight),
        "head.bias": np.zeros(1, dtype=np.float64),
    }
    if not freeze_encoder:
        grads.update({k: np.zeros_like(v) for k, v in encoder.parameters().items()})

    probs = np.empty(n)
    hiddens = []
    for i, p in enumerate(batch):
        h = encoder.hidden_at(p.ids, p.readout_pos)
        hiddens.append(h)
        probs[i] = sigmoid(np.array([head.weight @ h + head.bias]))[0]

    labels = np.array([p.label for p in batch], dtype=np.float64)
    loss = bce_loss(probs, labels, epsilon)

    clamped = (probs < epsilon) | (probs > 1.0 - epsilon)
    dz = (probs - labels) / n
    dz[clamped] = 0.0  # clamp zeroes the local gradient
    for i, p in enumerate(batch):
        grads["head.weight"] += dz[i] * hiddens[i]
        grads["head.bias"][0] += dz[i]
        if not freeze_encoder:
            encoder.backward_at(p.ids, p.readout_pos, dz[i] * head.weight, grads)
    return loss, grads


class AdamW:
    """Adam with decoupled weight decay; decay skips parameters named *.bias."""

    def __init__(self, learning_rate: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.wd = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if not name.endswith(".bias"):
                update = update + self.wd * p
            p -= self.lr * update


class EarlyStopper:
    """Stop when the validation metric has not strictly improved for
    ``patience`` consecutive epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best: float | None = None
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, metric: float) -> bool:
        """Record the epoch's metric; returns True when training should stop."""
        if self.best is None or metric > self.best:
            self.best = metric
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_auc: float
    val_acc: float


@dataclass
class MetricHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def to_dict(self) -> dict:
        return {
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
        }


@dataclass
class TrainedModel:
    encoder: ToyTextEncoder
    head: PredictionHead
    config: TrainConfig
    tokens: SpecialTokens = SpecialTokens()

    def predict(self, samples: Sequence[EncodedSample]) -> np.ndarray:
        return forward(samples, self.encoder, self.head, self.config.pooling)


@dataclass
class FoldResult:
    fold_index: int
    model: TrainedModel
    history: MetricHistory


def _validation_metric(probs: np.ndarray, labels: np.ndarray) -> tuple[float, float, float]:
    """(stopping metric, val auc, val acc); falls back to accuracy when the
    validation labels are single-class and AUC is undefined."""
    val_acc = acc_metric(probs, labels)
    try:
        val_auc = auc_metric(probs, labels)
        return val_auc, val_auc, val_acc
    except ValidationError:
        return val_acc, float("nan"), val_acc


def train(
    log: InteractionLog,
    folds: Sequence[FoldSplit],
    encoder_factory: Callable[[], ToyTextEncoder],
    config: TrainConfig,
    progress: Callable[[str], None] | None = None,
) -> list[FoldResult]:
    """Fine-tune encoder+head per fold with AdamW, early stopping on
    validation AUC, and best-checkpoint restoration."""
    results = []
    for fold in folds:
        if not fold.validation_students:
            raise ValidationError(
                "validation set empty: split with a nonzero validation_fraction"
            )
        encoder = encoder_factory()
        train_samples = build_training_set(
            log, config.token_budget, encoder.count_tokens,
            student_ids=fold.train_students,
        )
        val_samples = build_training_set(
            log, config.token_budget, encoder.count_tokens,
            student_ids=fold.validation_students,
        )
        result = _train_single(encoder, train_samples, val_samples, config, fold.fold_index, progress)
        results.append(result)
    return results


def _train_single(
    encoder: ToyTextEncoder,
    train_samples: Sequence[EncodedSample],
    val_samples: Sequence[EncodedSample],
    config: TrainConfig,
    fold_index: int = 0,
    progress: Callable[[str], None] | None = None,
) -> FoldResult:
    head = PredictionHead.zeros(encoder.dim)
    prepared_train = prepare_samples(train_samples, encoder, config.pooling)
    prepared_val = prepare_samples(val_samples, encoder, config.pooling)
    val_labels = np.array([p.label for p in prepared_val], dtype=np.float64)

    optimizer = AdamW(config.learning_rate, config.weight_decay)
    stopper = EarlyStopper(config.early_stop_patience)
    history = MetricHistory()
    rng = np.random.default_rng(config.seed + 7919 * fold_index)

    params = {"head.weight": head.weight, "head.bias": np.array([head.bias])}
    if not config.freeze_encoder:
        params.update(encoder.parameters())

    best_snapshot = {k: v.copy() for k, v in params.items()}

    def flush(accum: dict[str, np.ndarray], micro_batches: int) -> None:
        if micro_batches == 0:
            return
        for g in accum.values():
            g /= micro_batches
        optimizer.step(params, accum)
        head.bias = float(params["head.bias"][0])

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(prepared_train))
        accum = {k: np.zeros_like(v) for k, v in params.items()}
        micro_count = 0
        losses, weights = [], []
        for start in range(0, len(order), config.per_step_batch):
            batch = [prepared_train[i] for i in order[start:start + config.per_step_batch]]
            loss, grads = loss_and_grads(
                batch, encoder, head, config.label_clamp_epsilon, config.freeze_encoder
            )
            for k in accum:
                accum[k] += grads[k]
            micro_count += 1
            losses.append(loss)
            weights.append(len(batch))
            if micro_count == config.accumulation_steps:
                flush(accum, micro_count)
                accum = {k: np.zeros_like(v) for k, v in params.items()}
                micro_count = 0
        flush(accum, micro_count)  # partial accumulation at epoch end

        train_loss = float(np.average(losses, weights=weights))
        val_probs = forward(prepared_val, encoder, head, config.pooling)
        metric, val_auc, val_acc = _validation_metric(val_probs, val_labels)
        history.epochs.append(EpochRecord(epoch, train_loss, val_auc, val_acc))
        if progress:
            progress(f"fold {fold_index} epoch {epoch}: loss={train_loss:.4f} val_auc={val_auc:.4f}")

        improved_to_best = stopper.best is None or metric > stopper.best
        should_stop = stopper.update(epoch, metric)
        if improved_to_best:
            best_snapshot = {k: v.copy() for k, v in params.items()}
        if should_stop:
            break

    history.best_epoch = stopper.best_epoch
    history.stopped_epoch = history.epochs[-1].epoch if history.epochs else 0

    # restore the best-validation checkpoint
    for k, v in params.items():
        v[...] = best_snapshot[k]
    head.bias = float(params["head.bias"][0])

    model = TrainedModel(encoder=encoder, head=head, config=config)
    return FoldResult(fold_index=fold_index, model=model, history=history)


def predict_next(
    model: TrainedModel,
    history: Sequence[Interaction],
    candidate: dict,
) -> float:
    """Probability that the student answers the candidate question correctly.

    Builds the masked input with the candidate as the final triple; this is
    the value interpolated into feedback prompts as the model probability.
    """
    kc_text = candidate.get("kc_text", "")
    question_text = candidate.get("question_text", "")
    if not kc_text or not question_text:
        raise ValidationError("candidate must provide kc_text and question_text")
    target = Interaction(
        student_id="_candidate",
        question_id=str(candidate.get("question_id", "_candidate")),
        answer_code="",
        correct=0,  # placeholder; the masked slot's label is not used at inference
        kc_id=str(candidate.get("kc_id", "")),
        kc_text=kc_text,
        question_text=question_text,
    )
    sample = build_input(
        list(history), target, model.config.token_budget,
        model.encoder.count_tokens, model.tokens,
    )
    return float(model.predict([sample])[0])


def evaluate_fold(
    model: TrainedModel,
    log: InteractionLog,
    student_ids: Sequence[str],
) -> tuple[list[tuple[str, int]], np.ndarray, np.ndarray]:
    """(target list, scores, labels) over the shared harness target list."""
    from .evaluation import prediction_targets

    targets = prediction_targets(log, student_ids)
    samples = []
    for sid, step in targets:
        seq = log.students[sid]
        samples.append(build_input(
            seq[:step - 1], seq[step - 1], model.config.token_budget,
            model.encoder.count_tokens, model.tokens,
        ))
    scores = model.predict(samples)
    labels = np.array([s.label for s in samples])
    return targets, scores, labels


# -- checkpoint serialization -------------------------------------------


def save_encoder(encoder: ToyTextEncoder, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "encoder.json").write_text(json.dumps(encoder.describe(), indent=2))
    np.savez(out / "encoder_weights.npz", embeddings=encoder.embeddings)


def load_encoder(in_dir: str | Path) -> ToyTextEncoder:
    src = Path(in_dir)
    desc = json.loads((src / "encoder.json").read_text())
    if desc["type"] != "toy":
        raise ValidationError(f"unknown encoder type {desc['type']!r}")
    encoder = ToyTextEncoder(
        dim=desc["dim"], vocab_size=desc["vocab_size"], seed=desc["seed"],
        self_weight=desc["self_weight"], decay=desc["decay"],
        provenance=desc["provenance"],
    )
    encoder.embeddings = np.load(src / "encoder_weights.npz")["embeddings"]
    return encoder


def save_checkpoint(result: FoldResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = result.model
    (out / "config.json").write_text(json.dumps(asdict(model.config), indent=2))
    (out / "head.json").write_text(json.dumps({
        "weight": model.head.weight.tolist(),
        "bias": model.head.bias,
    }))
    (out / "history.json").write_text(json.dumps(result.history.to_dict(), indent=2))
    (out / "encoder.json").write_text(json.dumps(model.encoder.describe(), indent=2))
    np.savez(out / "encoder_weights.npz", embeddings=model.encoder.embeddings)


def load_checkpoint(in_dir: str | Path) -> FoldResult:
    src = Path(in_dir)
    config = TrainConfig(**json.loads((src / "config.json").read_text()))
    head_raw = json.loads((src / "head.json").read_text())
    head = PredictionHead(weight=np.array(head_raw["weight"]), bias=head_raw["bias"])
    desc = json.loads((src / "encoder.json").read_text())
    if desc["type"] != "toy":
        raise ValidationError(f"unknown encoder type {desc['type']!r}")
    encoder = ToyTextEncoder(
        dim=desc["dim"], vocab_size=desc["vocab_size"], seed=desc["seed"],
        self_weight=desc["self_weight"], decay=desc["decay"],
        provenance=desc["provenance"],
    )
    encoder.embeddings = np.load(src / "encoder_weights.npz")["embeddings"]
    hist_raw = json.loads((src / "history.json").read_text())
    history = MetricHistory(
        epochs=[EpochRecord(**e) for e in hist_raw["epochs"]],
        best_epoch=hist_raw["best_epoch"],
        stopped_epoch=hist_raw["stopped_epoch"],
    )
    model = TrainedModel(encoder=encoder, head=head, config=config)
    return FoldResult(fold_index=0, model=model, history=history)
