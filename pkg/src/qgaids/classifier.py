"""Binary logistic regression trained by full-batch gradient descent.

The penalized objective is ``mean(log(1 + e^z) - y z) + l2/2 * |w|^2`` (bias not
penalized). A step that would raise the objective is halved and retried up to
``MAX_HALVINGS`` times; if it still fails the parameters stay put, so the
recorded loss never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, SingleClassTraining

ITERATIONS = 200
MAX_HALVINGS = 10
THRESHOLD = 0.5


@dataclass(frozen=True)
class Hyper:
    learning_rate: float
    l2_penalty: float


@dataclass(frozen=True, eq=False)
class ClassifierParams:
    weights: np.ndarray
    bias: float
    hyper: Hyper
    loss_history: tuple[float, ...] = field(default=(), repr=False)


def _softplus_sigmoid(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``log(1 + e^z)`` and ``1 / (1 + e^-z)`` from a single ``exp(-|z|)``."""
    e = np.exp(-np.abs(z))
    sp = np.log1p(e)
    sp += np.maximum(z, 0.0)
    s = np.where(z >= 0.0, 1.0, e)
    s /= 1.0 + e
    return sp, s


def penalized_loss(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2: float) -> float:
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))


def loss_grad(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2: float):
    """Penalized loss and its gradient with respect to ``(w, b)``."""
    n = len(y)
    z = X @ w
    z += b
    sp, r = _softplus_sigmoid(z)
    loss = float((sp.sum() - y @ z) / n + 0.5 * l2 * (w @ w))
    r -= y
    r /= n
    return loss, X.T @ r + l2 * w, float(r.sum())


def train_classifier(Z_S: np.ndarray, y: np.ndarray, hyper: Hyper, seed: int = 0,
                     iterations: int = ITERATIONS) -> ClassifierParams:
    """Fit from zero initialization; ``seed`` is accepted for interface symmetry only."""
    X = np.ascontiguousarray(Z_S, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise DimensionMismatch(f"need a non-empty 2-D design matrix, got {X.shape}")
    if y.shape != (X.shape[0],):
        raise DimensionMismatch("one label per row required")
    if np.all(y == y[0]):
        raise SingleClassTraining("training labels contain a single class")
    lr, l2 = hyper.learning_rate, hyper.l2_penalty
    w = np.zeros(X.shape[1])
    b = 0.0
    loss, gw, gb = loss_grad(X, y, w, b, l2)
    history = [loss]
    step = lr
    for _ in range(iterations):
        for _ in range(MAX_HALVINGS + 1):
            w_new = w - step * gw
            b_new = b - step * gb
            new_loss, new_gw, new_gb = loss_grad(X, y, w_new, b_new, l2)
            if new_loss <= loss:
                w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
                break
            step *= 0.5
        history.append(loss)
    return ClassifierParams(w, b, hyper, tuple(history))


def predict_scores(params: ClassifierParams, Z_S: np.ndarray) -> np.ndarray:
    Z_S = np.asarray(Z_S, dtype=np.float64)
    if Z_S.ndim != 2 or Z_S.shape[1] != len(params.weights):
        raise DimensionMismatch(
            f"classifier has {len(params.weights)} weights, input has shape {Z_S.shape}")
    return expit(Z_S @ params.weights + params.bias)


def predict_labels(params: ClassifierParams, Z_S: np.ndarray) -> np.ndarray:
    return (predict_scores(params, Z_S) >= THRESHOLD).astype(np.int64)


def fit_many(X: np.ndarray, y: np.ndarray, masks: np.ndarray, hyper: Hyper,
             iterations: int = ITERATIONS) -> tuple[np.ndarray, np.ndarray]:
    """Train one model per row of the boolean ``masks`` (K x d) simultaneously.

    Same objective, zero start and per-model step halving as ``train_classifier``;
    features outside a model's mask keep weight 0. Returns ``(W (d x K), b (K,))``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    M = np.asarray(masks, dtype=np.float64).T
    n, K = X.shape[0], M.shape[1]
    lr, l2 = hyper.learning_rate, hyper.l2_penalty

    def objective(W, z):
        sp, s = _softplus_sigmoid(z)
        loss = (sp.sum(axis=0) - y @ z) / n + 0.5 * l2 * np.einsum("ij,ij->j", W, W)
        s -= y[:, None]
        s /= n
        return loss, s

    W = np.zeros((X.shape[1], K))
    b = np.zeros(K)
    loss, r = objective(W, X @ W + b)
    gW, gb = X.T @ r * M, r.sum(axis=0)
    step = np.full(K, lr)
    for _ in range(iterations):
        idx = np.arange(K)
        for _ in range(MAX_HALVINGS + 1):
            W_new = W[:, idx] - step[idx] * gW[:, idx]
            b_new = b[idx] - step[idx] * gb[idx]
            new_loss, r = objective(W_new, X @ W_new + b_new)
            ok = new_loss <= loss[idx]
            acc = idx[ok]
            if acc.size:
                W[:, acc] = W_new[:, ok]
                b[acc] = b_new[ok]
                loss[acc] = new_loss[ok]
                r_ok = r[:, ok] if acc.size < idx.size else r
                gW[:, acc] = (X.T @ r_ok + l2 * W[:, acc]) * M[:, acc]
                gb[acc] = r_ok.sum(axis=0)
            idx = idx[~ok]
            if idx.size == 0:
                break
            step[idx] *= 0.5
    return W, b
