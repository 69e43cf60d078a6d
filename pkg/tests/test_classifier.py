import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qgaids.classifier import (Hyper, fit_many, loss_grad, penalized_loss, predict_labels,
                               predict_scores, train_classifier)
from qgaids.errors import DimensionMismatch, SingleClassTraining


def _data(seed, n=80, k=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    y = (X @ rng.standard_normal(k) + 0.3 * rng.standard_normal(n) > 0).astype(int)
    return X, y


def test_fused_loss_matches_reference():
    X, y = _data(0)
    w = np.array([0.5, -2.0, 30.0])
    assert loss_grad(X, y, w, 0.3, 0.01)[0] == pytest.approx(
        penalized_loss(X, y, w, 0.3, 0.01), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), lr=st.sampled_from([0.01, 0.3, 5.0, 50.0]),
       l2=st.sampled_from([0.0, 1e-3, 1e-1]))
def test_loss_never_increases(seed, lr, l2):
    X, y = _data(seed)
    p = train_classifier(X, y, Hyper(lr, l2), iterations=60)
    h = np.array(p.loss_history)
    assert len(h) == 61
    assert np.all(np.diff(h) <= 0)


def test_learns_separable_problem():
    X, y = _data(1, n=300)
    p = train_classifier(X, y, Hyper(0.3, 0.0))
    assert np.mean(predict_labels(p, X) == y) > 0.9
    s = predict_scores(p, X)
    assert np.all((s >= 0) & (s <= 1))


def test_errors():
    X, y = _data(2)
    with pytest.raises(SingleClassTraining):
        train_classifier(X, np.zeros(len(y)), Hyper(0.1, 0.0))
    with pytest.raises(DimensionMismatch):
        train_classifier(X, y[:-1], Hyper(0.1, 0.0))
    p = train_classifier(X, y, Hyper(0.1, 0.0), iterations=5)
    with pytest.raises(DimensionMismatch):
        predict_scores(p, X[:, :2])


def test_fit_many_matches_single_trainer():
    X, y = _data(3, n=120, k=5)
    masks = np.array([[1, 0, 0, 0, 0], [1, 1, 0, 1, 0], [1, 1, 1, 1, 1], [0, 0, 0, 1, 1]],
                     dtype=bool)
    W, b = fit_many(X, y, masks, Hyper(0.3, 0.0))
    for k, mk in enumerate(masks):
        p = train_classifier(X[:, mk], y, Hyper(0.3, 0.0))
        assert np.allclose(W[mk, k], p.weights, atol=1e-12)
        assert np.all(W[~mk, k] == 0)
        assert b[k] == pytest.approx(p.bias, abs=1e-12)
    # with very large steps rounding can flip a halving decision in a flat valley,
    # so only the reached objective is compared
    hyper = Hyper(20.0, 1e-2)
    W, b = fit_many(X, y, masks, hyper)
    for k, mk in enumerate(masks):
        p = train_classifier(X[:, mk], y, hyper)
        reached = penalized_loss(X[:, mk], y, W[mk, k], b[k], hyper.l2_penalty)
        assert reached == pytest.approx(p.loss_history[-1], abs=1e-12)
