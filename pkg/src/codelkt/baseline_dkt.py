"""Classic DKT baseline: a recurrent network over one-hot interaction
encodings, trained with the same fold protocol and metrics as the text
model so AUC deltas are attributable to the model.

Smallest standard configuration: hidden size 64, a single tanh recurrent
layer, AdamW. Predictions for step t are read from the hidden state after
consuming interactions 1..t-1, so the first interaction of a student is
never a prediction target (there is no past to condition on).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import FoldSplit, Interaction, InteractionLog
from .errors import ValidationError
from .evaluation import FoldMetrics, acc as acc_metric, auc as auc_metric, prediction_targets
from .kt_model import AdamW, EarlyStopper, sigmoid


@dataclass
class SkillIndex:
    """Total, invertible kc_id <-> integer mapping over a log's KC vocabulary."""

    to_index: dict[str, int]
    to_kc: list[str]

    @classmethod
    def from_log(cls, log: InteractionLog) -> "SkillIndex":
        kcs = sorted(log.kc_vocabulary)
        return cls(to_index={kc: i for i, kc in enumerate(kcs)}, to_kc=kcs)

    @property
    def size(self) -> int:
        return len(self.to_kc)

    def index(self, kc_id: str) -> int:
        try:
            return self.to_index[kc_id]
        except KeyError:
            raise ValidationError(f"unknown kc_id {kc_id!r}") from None


def encode_onehot(interaction: Interaction, skills: SkillIndex) -> np.ndarray:
    """One-hot of length 2M: position skill + M*correct is set."""
    m = skills.size
    vec = np.zeros(2 * m, dtype=np.float64)
    vec[skills.index(interaction.kc_id) + m * interaction.correct] = 1.0
    return vec


@dataclass
class DktConfig:
    hidden_size: int = 64
    learning_rate: float = 5e-3
    weight_decay: float = 0.01
    max_epochs: int = 100
    early_stop_patience: int = 10
    seed: int = 0
    label_clamp_epsilon: float = 1e-7


class DktModel:
    def __init__(self, skills: SkillIndex, config: DktConfig):
        self.skills = skills
        self.config = config
        m, h = skills.size, config.hidden_size
        rng = np.random.default_rng(config.seed)
        self.w_in = rng.normal(0.0, 1.0 / np.sqrt(2 * m), size=(h, 2 * m))
        self.w_rec = rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, h))
        self.b_h = np.zeros(h)
        # zero-init output layer: initial predictions are 0.5 everywhere
        self.w_out = np.zeros((m, h))
        self.b_out = np.zeros(m)

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "dkt.w_in": self.w_in,
            "dkt.w_rec": self.w_rec,
            "dkt.b_h": self.b_h,
            "dkt.w_out": self.w_out,
            "dkt.b_out": self.b_out,
        }

    def _sequence_arrays(self, seq: list[Interaction]) -> tuple[np.ndarray, np.ndarray]:
        m = self.skills.size
        skills = np.array([self.skills.index(it.kc_id) for it in seq], dtype=np.int64)
        onehot_idx = skills + m * np.array([it.correct for it in seq], dtype=np.int64)
        return skills, onehot_idx

    def _hidden_states(self, onehot_idx: np.ndarray, upto: int) -> np.ndarray:
        """h_0..h_upto; h_t consumes interaction t (1-based)."""
        h = np.zeros((upto + 1, self.config.hidden_size))
        for t in range(1, upto + 1):
            a = self.w_in[:, onehot_idx[t - 1]] + self.w_rec @ h[t - 1] + self.b_h
            h[t] = np.tanh(a)
        return h

    def sequence_predictions(self, seq: list[Interaction]) -> np.ndarray:
        """p_t for t=2..n: probability of answering step t's skill correctly,
        conditioned on interactions 1..t-1."""
        n = len(seq)
        if n < 2:
            return np.zeros(0)
        skills, onehot_idx = self._sequence_arrays(seq)
        h = self._hidden_states(onehot_idx, n - 1)
        z = np.array([self.w_out[skills[t - 1]] @ h[t - 1] + self.b_out[skills[t - 1]]
                      for t in range(2, n + 1)])
        return sigmoid(z)

    def predict_next(self, history: list[Interaction], kc_id: str) -> float:
        """Probability for a candidate skill after consuming the history."""
        idx = self.skills.index(kc_id)
        if not history:
            return float(sigmoid(np.array([self.b_out[idx]]))[0])
        _, onehot_idx = self._sequence_arrays(history)
        h = self._hidden_states(onehot_idx, len(history))
        return float(sigmoid(np.array([self.w_out[idx] @ h[-1] + self.b_out[idx]]))[0])

    def _loss_and_grads(self, sequences: list[list[Interaction]]) -> tuple[float, dict]:
        grads = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        eps = self.config.label_clamp_epsilon
        total_targets = sum(max(len(s) - 1, 0) for s in sequences)
        if total_targets == 0:
            return 0.0, grads
        loss = 0.0
        for seq in sequences:
            n = len(seq)
            if n < 2:
                continue
            skills, onehot_idx = self._sequence_arrays(seq)
            labels = np.array([it.correct for it in seq], dtype=np.float64)
            h = self._hidden_states(onehot_idx, n - 1)

            dz = np.zeros(n + 1)
            for t in range(2, n + 1):
                s = skills[t - 1]
                p = sigmoid(np.array([self.w_out[s] @ h[t - 1] + self.b_out[s]]))[0]
                pc = min(max(p, eps), 1.0 - eps)
                loss += -(labels[t - 1] * np.log(pc) + (1 - labels[t - 1]) * np.log(1 - pc))
                dz[t] = (p - labels[t - 1]) / total_targets
                grads["dkt.w_out"][s] += dz[t] * h[t - 1]
                grads["dkt.b_out"][s] += dz[t]

            carry = np.zeros(self.config.hidden_size)
            for t in range(n - 1, 0, -1):
                dh = dz[t + 1] * self.w_out[skills[t]] + carry
                da = dh * (1.0 - h[t] ** 2)
                grads["dkt.w_in"][:, onehot_idx[t - 1]] += da
                grads["dkt.w_rec"] += np.outer(da, h[t - 1])
                grads["dkt.b_h"] += da
                carry = self.w_rec.T @ da
        return loss / total_targets, grads


@dataclass
class DktFoldResult:
    fold_index: int
    model: DktModel
    metrics: FoldMetrics
    targets: list[tuple[str, int]]
    scores: np.ndarray
    labels: np.ndarray
    history: list[dict] = field(default_factory=list)


def _evaluate(model: DktModel, log: InteractionLog, student_ids) -> tuple[list, np.ndarray, np.ndarray]:
    targets = prediction_targets(log, student_ids)
    scores, labels = [], []
    by_student: dict[str, np.ndarray] = {}
    for sid, step in targets:
        if sid not in by_student:
            by_student[sid] = model.sequence_predictions(log.students[sid])
        scores.append(by_student[sid][step - 2])
        labels.append(log.students[sid][step - 1].correct)
    return targets, np.array(scores), np.array(labels)


def dkt_train_eval(
    log: InteractionLog,
    folds: list[FoldSplit],
    config: DktConfig | None = None,
) -> list[DktFoldResult]:
    """Train and evaluate the baseline on each fold; returns per-fold
    metrics plus the exact target lists used, for harness parity checks."""
    config = config or DktConfig()
    skills = SkillIndex.from_log(log)
    results = []
    for fold in folds:
        model = DktModel(skills, DktConfig(**{**config.__dict__, "seed": config.seed + fold.fold_index}))
        train_seqs = [log.students[s] for s in sorted(fold.train_students) if s in log.students]
        val_students = sorted(fold.validation_students)
        if not val_students:
            raise ValidationError(
                "validation set empty: split with a nonzero validation_fraction"
            )

        optimizer = AdamW(config.learning_rate, config.weight_decay)
        stopper = EarlyStopper(config.early_stop_patience)
        params = model.parameters()
        best = {k: v.copy() for k, v in params.items()}
        epoch_log = []
        for epoch in range(1, config.max_epochs + 1):
            loss, grads = model._loss_and_grads(train_seqs)
            optimizer.step(params, grads)
            _, val_scores, val_labels = _evaluate(model, log, val_students)
            if len(val_scores) == 0:
                raise ValidationError("validation students have no prediction targets")
            try:
                metric = auc_metric(val_scores, val_labels)
            except ValidationError:
                metric = acc_metric(val_scores, val_labels)
            epoch_log.append({"epoch": epoch, "train_loss": loss, "val_metric": metric})
            improved = stopper.best is None or metric > stopper.best
            should_stop = stopper.update(epoch, metric)
            if improved:
                best = {k: v.copy() for k, v in params.items()}
            if should_stop:
                break
        for k, v in params.items():
            v[...] = best[k]

        targets, scores, labels = _evaluate(model, log, sorted(fold.test_students))
        try:
            fold_auc = auc_metric(scores, labels)
        except ValidationError:
            fold_auc = float("nan")
        results.append(DktFoldResult(
            fold_index=fold.fold_index,
            model=model,
            metrics=FoldMetrics(auc=fold_auc, acc=acc_metric(scores, labels)),
            targets=targets,
            scores=scores,
            labels=labels,
            history=epoch_log,
        ))
    return results
