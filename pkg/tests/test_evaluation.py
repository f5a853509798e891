import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codelkt.errors import ValidationError
from codelkt.evaluation import (
    FoldMetrics,
    acc,
    aggregate_folds,
    auc,
    format_metric,
    prediction_targets,
    render_csv,
    render_markdown,
)
from codelkt.synth import random_log


def pairwise_auc(scores, labels):
    """O(n^2) Mann-Whitney oracle: P(pos > neg) + 0.5 P(tie)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_auc_perfect_ranking():
    assert auc([0.9, 0.1], [1, 0]) == 1.0


def test_auc_full_tie():
    assert auc([0.5, 0.5], [1, 0]) == 0.5


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(42)
    for _ in range(25):
        n = int(rng.integers(5, 50))
        scores = rng.random(n)
        if rng.random() < 0.5:
            scores = np.round(scores, 1)  # force ties
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


def test_auc_rejects_single_class():
    with pytest.raises(ValidationError, match="AUC undefined"):
        auc([0.2, 0.4], [1, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random(30)
    labels = rng.integers(0, 2, 30)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    base = auc(scores, labels)
    # strictly monotone maps preserve the ranking and therefore the AUC
    assert auc(np.exp(3 * scores), labels) == pytest.approx(base, abs=1e-12)
    assert auc(2 * scores - 5, labels) == pytest.approx(base, abs=1e-12)


def test_auc_negation_complement():
    rng = np.random.default_rng(7)
    scores = rng.random(40)  # continuous, ties have probability zero
    labels = rng.integers(0, 2, 40)
    labels[0], labels[1] = 0, 1
    assert auc(scores, labels) + auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


def test_acc_basic_and_boundary():
    assert acc([0.9, 0.1], [1, 0]) == 1.0
    # a score exactly at the threshold classifies positive
    assert acc([0.5], [0]) == 0.0
    assert acc([0.5], [1]) == 1.0


def test_acc_matches_counting_oracle():
    rng = np.random.default_rng(11)
    scores = rng.random(100)
    labels = rng.integers(0, 2, 100)
    expected = sum(int(s >= 0.5) == y for s, y in zip(scores, labels)) / 100
    assert acc(scores, labels) == pytest.approx(expected)


def test_aggregate_constant_folds():
    report = aggregate_folds([FoldMetrics(0.9, 0.9)] * 5)
    assert report.auc_cell == "0.9000±0.0000"


def test_aggregate_two_folds_hand_arithmetic():
    report = aggregate_folds([FoldMetrics(0.8, 0.8), FoldMetrics(1.0, 1.0)])
    # mean 0.9, population std sqrt(((0.1)^2 + (0.1)^2)/2) = 0.1
    assert report.auc_cell == "0.9000±0.1000"


def test_cell_format_matches_paper_table_regex():
    cell = format_metric(0.9116, 0.0096)
    assert re.fullmatch(r"\d\.\d{4}±\d\.\d{4}", cell)
    assert cell == "0.9116±0.0096"


def test_aggregate_requires_two_folds():
    with pytest.raises(ValidationError):
        aggregate_folds([FoldMetrics(0.9, 0.9)])


def test_prediction_targets_skip_first_step():
    log = random_log(seed=5, n_students=4, min_len=1, max_len=4)
    targets = prediction_targets(log, list(log.students))
    for sid, seq in log.students.items():
        expected = [(sid, step) for step in range(2, len(seq) + 1)]
        assert [t for t in targets if t[0] == sid] == expected


def test_render_markdown_stable():
    reports = [
        aggregate_folds([FoldMetrics(0.9, 0.85), FoldMetrics(0.8, 0.8)],
                        model_tag="LKT(toy)", dataset_tag="synth"),
        aggregate_folds([FoldMetrics(0.7, 0.8), FoldMetrics(0.7, 0.8)],
                        model_tag="DKT", dataset_tag="synth"),
    ]
    text = render_markdown(reports)
    assert text == render_markdown(reports)  # pure function of the report
    assert "| LKT(toy) | 0.8500±0.0500 | 0.8250±0.0250 |" in text
    assert "| DKT | 0.7000±0.0000 | 0.8000±0.0000 |" in text


def test_render_csv_has_header_and_rows():
    reports = [aggregate_folds([FoldMetrics(0.9, 0.9), FoldMetrics(0.9, 0.9)],
                               model_tag="DKT", dataset_tag="synth")]
    text = render_csv(reports)
    lines = text.strip().splitlines()
    assert lines[0] == "model,synth_auc,synth_acc"
    assert lines[1] == "DKT,0.9000±0.0000,0.9000±0.0000"
