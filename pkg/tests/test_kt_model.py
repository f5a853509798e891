import copy

import numpy as np
import pytest

from codelkt.data_model import split_kfold
from codelkt.encoding import build_training_set
from codelkt.errors import ValidationError
from codelkt.evaluation import auc
from codelkt.kt_model import (
    AdamW,
    EarlyStopper,
    PredictionHead,
    ToyTextEncoder,
    TrainConfig,
    TrainedModel,
    bce_loss,
    forward,
    load_checkpoint,
    loss_and_grads,
    predict_next,
    prepare_samples,
    save_checkpoint,
    train,
)
from codelkt.synth import random_log, separable_log

from conftest import make_interaction


def _prepared_batch(seed=0, n_students=3):
    log = random_log(seed=seed, n_students=n_students)
    encoder = ToyTextEncoder(seed=seed)
    samples = build_training_set(log, token_budget=512)
    return encoder, prepare_samples(samples, encoder)


# -- forward ------------------------------------------------------------------


def test_forward_zero_head_gives_half():
    encoder, prepared = _prepared_batch()
    head = PredictionHead.zeros(encoder.dim)
    probs = forward(prepared, encoder, head)
    assert np.allclose(probs, 0.5)


def test_forward_matches_hand_computed_dot_product():
    encoder, prepared = _prepared_batch(seed=3)
    rng = np.random.default_rng(5)
    head = PredictionHead(weight=rng.normal(size=encoder.dim), bias=0.3)
    probs = forward(prepared, encoder, head)
    for sample, p in zip(prepared, probs):
        # independent recomputation of the hidden vector from the embedding
        # table: self part plus distance-decayed context mean
        ids, pos = sample.ids, sample.readout_pos
        w = encoder.decay ** np.abs(np.arange(len(ids)) - pos)
        w = w / w.sum()
        h = 0.5 * encoder.embeddings[ids[pos]] + 0.5 * sum(
            wi * encoder.embeddings[i] for wi, i in zip(w, ids)
        )
        z = float(np.dot(head.weight, h) + head.bias)
        assert p == pytest.approx(1.0 / (1.0 + np.exp(-z)), abs=1e-6)


def test_forward_negated_head_complements():
    encoder, prepared = _prepared_batch(seed=4)
    rng = np.random.default_rng(6)
    head = PredictionHead(weight=rng.normal(size=encoder.dim), bias=-0.2)
    negated = PredictionHead(weight=-head.weight, bias=-head.bias)
    p = forward(prepared, encoder, head)
    q = forward(prepared, encoder, negated)
    assert np.allclose(p + q, 1.0)


def test_forward_rejects_dim_mismatch():
    encoder, prepared = _prepared_batch()
    head = PredictionHead.zeros(encoder.dim + 1)
    with pytest.raises(ValidationError, match="dimension"):
        forward(prepared, encoder, head)


# -- loss ---------------------------------------------------------------------


def test_bce_at_half_is_ln2():
    assert bce_loss(np.array([0.5, 0.5]), np.array([1, 0])) == pytest.approx(np.log(2), abs=1e-9)


def test_bce_hand_arithmetic():
    loss = bce_loss(np.array([0.9, 0.1]), np.array([1, 0]))
    assert loss == pytest.approx(-np.log(0.9), abs=1e-9)
    assert loss == pytest.approx(0.105361, abs=1e-6)


def test_bce_perfect_predictions_near_zero():
    eps = 1e-7
    loss = bce_loss(np.array([1.0, 0.0]), np.array([1, 0]), epsilon=eps)
    assert 0 < loss <= -np.log(1 - eps) + 1e-12


def test_bce_rejects_empty():
    with pytest.raises(ValidationError):
        bce_loss(np.array([]), np.array([]))


def test_bce_batch_order_invariant():
    rng = np.random.default_rng(0)
    p = rng.random(20)
    y = rng.integers(0, 2, 20)
    perm = rng.permutation(20)
    assert bce_loss(p, y) == pytest.approx(bce_loss(p[perm], y[perm]), abs=1e-12)


# -- gradients ----------------------------------------------------------------


def finite_difference_check(encoder, head, batch, n_coords=24, rel_tol=1e-4, seed=0):
    """Central-difference oracle over sampled coordinates of every
    parameter tensor (embeddings restricted to rows the batch touches)."""
    labels = np.array([p.label for p in batch], dtype=np.float64)

    def loss_now():
        return bce_loss(forward(batch, encoder, head), labels)

    _, grads = loss_and_grads(batch, encoder, head)
    rng = np.random.default_rng(seed)
    eps = 1e-6

    touched_rows = sorted({int(i) for p in batch for i in p.ids})
    coords = [("head.bias", None)]
    coords += [("head.weight", int(i)) for i in rng.choice(encoder.dim, 5, replace=False)]
    for _ in range(n_coords):
        row = int(rng.choice(touched_rows))
        col = int(rng.integers(encoder.dim))
        coords.append(("encoder.embeddings", (row, col)))

    checked = 0
    for name, idx in coords:
        if name == "head.bias":
            head.bias += eps
            up = loss_now()
            head.bias -= 2 * eps
            down = loss_now()
            head.bias += eps
            analytic = grads["head.bias"][0]
        elif name == "head.weight":
            head.weight[idx] += eps
            up = loss_now()
            head.weight[idx] -= 2 * eps
            down = loss_now()
            head.weight[idx] += eps
            analytic = grads["head.weight"][idx]
        else:
            encoder.embeddings[idx] += eps
            up = loss_now()
            encoder.embeddings[idx] -= 2 * eps
            down = loss_now()
            encoder.embeddings[idx] += eps
            analytic = grads["encoder.embeddings"][idx]
        numeric = (up - down) / (2 * eps)
        denom = max(abs(analytic), abs(numeric), 1e-8)
        assert abs(analytic - numeric) / denom < rel_tol, (name, idx, analytic, numeric)
        checked += 1
    return checked


def test_gradcheck_random_batches():
    rng = np.random.default_rng(123)
    for trial in range(3):
        encoder, prepared = _prepared_batch(seed=trial, n_students=2)
        head = PredictionHead(weight=rng.normal(0, 0.5, encoder.dim), bias=float(rng.normal()))
        batch = prepared[: min(8, len(prepared))]
        assert finite_difference_check(encoder, head, batch, seed=trial) > 0


# -- optimizer / early stopping ------------------------------------------------


def test_adamw_decay_skips_bias():
    opt = AdamW(learning_rate=0.1, weight_decay=0.5)
    params = {"w": np.array([1.0]), "x.bias": np.array([1.0])}
    grads = {"w": np.array([0.0]), "x.bias": np.array([0.0])}
    opt.step(params, grads)
    assert params["w"][0] < 1.0      # decayed even with zero gradient
    assert params["x.bias"][0] == 1.0


def test_early_stopper_patience_window():
    stopper = EarlyStopper(patience=10)
    stopped_at = None
    metrics = [0.1, 0.2, 0.3, 0.4, 0.5] + [0.5] * 20
    for epoch, metric in enumerate(metrics, start=1):
        if stopper.update(epoch, metric):
            stopped_at = epoch
            break
    assert stopped_at == 15
    assert stopper.best_epoch == 5


def test_early_stopper_requires_strict_improvement():
    stopper = EarlyStopper(patience=2)
    assert not stopper.update(1, 0.9)
    assert not stopper.update(2, 0.9)   # tie is not an improvement
    assert stopper.update(3, 0.9)
    assert stopper.best_epoch == 1


# -- training ----------------------------------------------------------------


def test_separable_dataset_is_linearly_separable_oracle():
    # independent oracle: logistic regression on the encoder's features
    from sklearn.linear_model import LogisticRegression

    log = separable_log(seed=0)
    encoder = ToyTextEncoder(seed=0)
    samples = build_training_set(log, token_budget=512)
    prepared = prepare_samples(samples, encoder)
    X = np.stack([encoder.hidden_at(p.ids, p.readout_pos) for p in prepared])
    y = np.array([p.label for p in prepared])
    # near-unregularized: the question is separability, not generalization
    clf = LogisticRegression(max_iter=5000, C=1e4).fit(X, y)
    assert clf.score(X, y) >= 0.95


def _train_separable(seed=0, max_epochs=100):
    log = separable_log(seed=seed)
    folds = split_kfold(log, k=4, seed=seed, validation_fraction=0.15)
    config = TrainConfig(seed=seed, max_epochs=max_epochs)
    results = train(log, [folds[0]], lambda: ToyTextEncoder(seed=seed), config)
    return log, folds[0], results[0]


def test_training_reaches_high_train_auc():
    log, fold, result = _train_separable()
    samples = build_training_set(log, token_budget=512, student_ids=fold.train_students)
    probs = result.model.predict(samples)
    labels = [s.label for s in samples]
    assert auc(probs, labels) >= 0.95


def test_early_stopping_restores_best_epoch():
    _, _, result = _train_separable()
    aucs = [e.val_auc for e in result.history.epochs]
    first_best = int(np.nanargmax(aucs)) + 1
    assert result.history.best_epoch == first_best
    assert result.history.best_epoch <= result.history.stopped_epoch


def test_training_is_deterministic():
    _, _, a = _train_separable(seed=5, max_epochs=4)
    _, _, b = _train_separable(seed=5, max_epochs=4)
    assert a.history.to_dict() == b.history.to_dict()
    assert np.array_equal(a.model.head.weight, b.model.head.weight)
    assert np.array_equal(a.model.encoder.embeddings, b.model.encoder.embeddings)


def test_train_requires_validation_students():
    log = separable_log(seed=1, n_students=8)
    folds = split_kfold(log, k=4, seed=1, validation_fraction=0.0)
    with pytest.raises(ValidationError, match="validation"):
        train(log, folds, lambda: ToyTextEncoder(seed=1), TrainConfig(max_epochs=1))


# -- prediction & checkpoints ---------------------------------------------------


def _toy_model(seed=0):
    encoder = ToyTextEncoder(seed=seed)
    rng = np.random.default_rng(seed)
    head = PredictionHead(weight=rng.normal(0, 0.2, encoder.dim), bias=0.1)
    return TrainedModel(encoder=encoder, head=head, config=TrainConfig(seed=seed))


def test_predict_next_empty_history():
    model = _toy_model()
    p = predict_next(model, [], {"kc_text": "loops", "question_text": "sum 1..n"})
    assert 0.0 < p < 1.0
    again = predict_next(model, [], {"kc_text": "loops", "question_text": "sum 1..n"})
    assert p == again


def test_predict_next_matches_forward_oracle():
    model = _toy_model(seed=2)
    history = [make_interaction(question="q1", kc_text="alpha", question_text="first task", correct=1)]
    p = predict_next(model, history, {"kc_text": "beta", "question_text": "second task"})
    target = make_interaction(question="q2", kc_text="beta", question_text="second task", correct=0)
    from codelkt.encoding import build_input
    sample = build_input(history, target, model.config.token_budget, model.encoder.count_tokens)
    assert p == pytest.approx(float(model.predict([sample])[0]), abs=1e-12)


def test_predict_next_requires_candidate_texts():
    model = _toy_model()
    with pytest.raises(ValidationError):
        predict_next(model, [], {"kc_text": "", "question_text": "x"})


def test_checkpoint_roundtrip(tmp_path):
    _, _, result = _train_separable(seed=3, max_epochs=3)
    save_checkpoint(result, tmp_path / "ckpt")
    loaded = load_checkpoint(tmp_path / "ckpt")
    assert np.array_equal(loaded.model.head.weight, result.model.head.weight)
    assert np.array_equal(loaded.model.encoder.embeddings, result.model.encoder.embeddings)
    assert loaded.history.to_dict() == result.history.to_dict()
    p1 = predict_next(result.model, [], {"kc_text": "skill0 even arithmetic",
                                         "question_text": "solve an even numbered drill about skill0"})
    p2 = predict_next(loaded.model, [], {"kc_text": "skill0 even arithmetic",
                                         "question_text": "solve an even numbered drill about skill0"})
    assert p1 == p2
