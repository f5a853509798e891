"""AUC/ACC metrics, cross-fold aggregation, and Table-style report emission.

AUC is the exact Mann-Whitney statistic, P(score_pos > score_neg) plus half
the tie probability, computed via midranks rather than the O(n^2) pairwise
sum. Accuracy uses the convention that a score exactly at the threshold
classifies positive.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank-sum form of Mann-Whitney U."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError("scores and labels must be 1-D and the same length")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC undefined: labels contain a single class")

    order = np.argsort(s, kind="mergesort")
    sorted_scores = s[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # midrank for the tie group spanning [i, j] (1-based ranks)
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1

    rank_sum_pos = float(np.sum(ranks[y == 1]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def acc(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> float:
    """Fraction of predictions whose thresholded class matches the label."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if len(s) == 0:
        raise ValidationError("acc undefined on an empty batch")
    predicted = (s >= threshold).astype(int)
    return float(np.mean(predicted == y))


@dataclass
class FoldMetrics:
    auc: float
    acc: float


@dataclass
class MetricReport:
    """Per-fold metrics plus mean/std aggregates for one (model, dataset) cell."""

    per_fold: list[FoldMetrics]
    auc_mean: float
    auc_std: float
    acc_mean: float
    acc_std: float
    model_tag: str = ""
    dataset_tag: str = ""

    @property
    def auc_cell(self) -> str:
        return format_metric(self.auc_mean, self.auc_std)

    @property
    def acc_cell(self) -> str:
        return format_metric(self.acc_mean, self.acc_std)

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "dataset_tag": self.dataset_tag,
            "per_fold": [{"auc": f.auc, "acc": f.acc} for f in self.per_fold],
            "auc": self.auc_cell,
            "acc": self.acc_cell,
            "auc_mean": self.auc_mean,
            "auc_std": self.auc_std,
            "acc_mean": self.acc_mean,
            "acc_std": self.acc_std,
        }


def format_metric(mean: float, std: float) -> str:
    """Render one table cell as mean±std to four decimals."""
    return f"{mean:.4f}±{std:.4f}"


def aggregate_folds(
    per_fold: Sequence[FoldMetrics | dict],
    model_tag: str = "",
    dataset_tag: str = "",
) -> MetricReport:
    """Mean and population std (ddof=0) of per-fold AUC/ACC."""
    if len(per_fold) < 2:
        raise ValidationError("need at least 2 folds to aggregate")
    folds = [f if isinstance(f, FoldMetrics) else FoldMetrics(**f) for f in per_fold]
    aucs = np.array([f.auc for f in folds], dtype=np.float64)
    accs = np.array([f.acc for f in folds], dtype=np.float64)
    return MetricReport(
        per_fold=folds,
        auc_mean=float(aucs.mean()),
        auc_std=float(aucs.std(ddof=0)),
        acc_mean=float(accs.mean()),
        acc_std=float(accs.std(ddof=0)),
        model_tag=model_tag,
        dataset_tag=dataset_tag,
    )


def prediction_targets(log, student_ids: Sequence[str]) -> list[tuple[str, int]]:
    """The shared evaluation target list: one (student_id, step) pair per
    interaction that has at least one past interaction to condition on
    (steps 2..n, 1-based; single-interaction students contribute none).

    Both the text-encoder model and the DKT baseline must score exactly this
    list so their metric deltas are attributable to the model.
    """
    targets = []
    for sid in sorted(set(student_ids) & set(log.students)):
        for step in range(2, len(log.students[sid]) + 1):
            targets.append((sid, step))
    return targets


def render_markdown(reports: Sequence[MetricReport]) -> str:
    """Markdown table: rows = models, column pairs = per-dataset AUC/ACC."""
    datasets = list(dict.fromkeys(r.dataset_tag for r in reports))
    models = list(dict.fromkeys(r.model_tag for r in reports))
    by_cell = {(r.model_tag, r.dataset_tag): r for r in reports}

    header = ["Model"]
    for ds in datasets:
        header += [f"{ds} AUC", f"{ds} ACC"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]
    for model in models:
        row = [model]
        for ds in datasets:
            r = by_cell.get((model, ds))
            row += [r.auc_cell, r.acc_cell] if r else ["-", "-"]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def render_csv(reports: Sequence[MetricReport]) -> str:
    """CSV emitter with the same layout as the markdown table."""
    import csv as _csv

    datasets = list(dict.fromkeys(r.dataset_tag for r in reports))
    models = list(dict.fromkeys(r.model_tag for r in reports))
    by_cell = {(r.model_tag, r.dataset_tag): r for r in reports}

    buf = io.StringIO()
    writer = _csv.writer(buf)
    header = ["model"]
    for ds in datasets:
        header += [f"{ds}_auc", f"{ds}_acc"]
    writer.writerow(header)
    for model in models:
        row = [model]
        for ds in datasets:
            r = by_cell.get((model, ds))
            row += [r.auc_cell, r.acc_cell] if r else ["", ""]
        writer.writerow(row)
    return buf.getvalue()
