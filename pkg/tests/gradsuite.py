"""Finite-difference checks of every hand-written gradient, one function per loss.

Each ``check_*`` builds a random instance from ``seed`` and returns the maximum
relative error between the analytic and central-difference gradients.
"""

import numpy as np

from conftest import central_diff, max_rel_error
from qgaids.classifier import loss_grad, penalized_loss
from qgaids.selfsup import (AuxHeads, Dense, SSLConfig, encode_forward, init_model,
                            mask_loss, ntxent_loss, ssl_components, ssl_loss, temporal_loss)

H = 1e-5


def _dense(rng, a, b):
    return Dense(rng.standard_normal((a, b)) * 0.5, rng.standard_normal(b) * 0.1)


def check_ntxent(seed: int) -> float:
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(1, 5)), int(rng.integers(2, 6))
    Z = rng.standard_normal((2 * n, p))
    tau = float(rng.uniform(0.2, 1.0))
    _, dZ = ntxent_loss(Z, tau)
    num = central_diff(lambda: ntxent_loss(Z, tau)[0], Z, H)
    return max_rel_error(dZ, num)


def check_mask(seed: int) -> float:
    rng = np.random.default_rng(seed)
    n, m, d = 6, 3, 5
    heads = AuxHeads(_dense(rng, m, d), _dense(rng, m, m))
    Hm = rng.standard_normal((n, m))
    X = rng.random((n, d))
    mask = rng.random((n, d)) < 0.4
    mask[0, 0] = True
    _, g = mask_loss(heads, Hm, X, mask)
    f = lambda: mask_loss(heads, Hm, X, mask)[0]
    errs = [max_rel_error(g["H"], central_diff(f, Hm, H)),
            max_rel_error(g["decoder"][0], central_diff(f, heads.decoder.weight, H)),
            max_rel_error(g["decoder"][1], central_diff(f, heads.decoder.bias, H))]
    return max(errs)


def check_temporal(seed: int) -> float:
    rng = np.random.default_rng(seed)
    n, m = 7, 4
    heads = AuxHeads(_dense(rng, m, 3), _dense(rng, m, m))
    Hm = rng.standard_normal((n, m))
    target = Hm[1:].copy()

    def frozen():  # stop-gradient: the next-step target does not move
        P = Hm[:-1] @ heads.predictor.weight + heads.predictor.bias
        return float(np.mean((P - target) ** 2))

    _, g = temporal_loss(heads, Hm)
    errs = [max_rel_error(g["H"], central_diff(frozen, Hm, H)),
            max_rel_error(g["predictor"][0], central_diff(frozen, heads.predictor.weight, H)),
            max_rel_error(g["predictor"][1], central_diff(frozen, heads.predictor.bias, H))]
    return max(errs)


def check_joint(seed: int) -> float:
    """Whole pretext objective w.r.t. every parameter, temporal term included."""
    rng = np.random.default_rng(seed)
    d, n = 7, 6
    cfg = SSLConfig(hidden_dim=5, embed_dim=3, proj_dim=3, tau=0.5, lambda_c=1.0,
                    lambda_m=0.5, lambda_t=0.5, seed=seed)
    model = init_model(d, cfg, rng)
    for k, v in model.named().items():
        if k.endswith(".bias"):  # zero biases can leave a row with an all-zero embedding
            v += 0.1 * rng.standard_normal(v.shape)
    X = rng.random((n, d))
    v1 = X + 0.05 * rng.standard_normal(X.shape)
    mask = rng.random(X.shape) < 0.3
    mask[0, 0] = True
    v2 = np.where(mask, 0.0, X + 0.05 * rng.standard_normal(X.shape))
    target = encode_forward(model.encoder, X)[0][1:].copy()
    params = model.named()

    def full():
        comps = ssl_components(model, X, v1, v2, mask, cfg, temporal=True)
        Hx = encode_forward(model.encoder, X)[0]
        P = Hx[:-1] @ model.heads.predictor.weight + model.heads.predictor.bias
        lt = float(np.mean((P - target) ** 2))
        return cfg.lambda_c * comps["contrastive"][0] + cfg.lambda_m * comps["mask"][0] \
            + cfg.lambda_t * lt

    _, grads = ssl_loss(ssl_components(model, X, v1, v2, mask, cfg, True), cfg, True)
    return max(max_rel_error(grads[k], central_diff(full, p, H)) for k, p in params.items())


def check_logistic(seed: int) -> float:
    rng = np.random.default_rng(seed)
    n, k = 30, int(rng.integers(1, 6))
    X = rng.standard_normal((n, k))
    y = (rng.random(n) < 0.5).astype(float)
    w = rng.standard_normal(k)
    b = np.array([rng.standard_normal()])
    l2 = float(rng.choice([0.0, 1e-3, 1e-1]))
    _, gw, gb = loss_grad(X, y, w, float(b[0]), l2)
    f = lambda: penalized_loss(X, y, w, float(b[0]), l2)
    return max(max_rel_error(gw, central_diff(f, w, H)),
               max_rel_error(np.array([gb]), central_diff(f, b, H)))


CHECKS = {"ntxent": check_ntxent, "mask": check_mask, "temporal": check_temporal,
          "joint_ssl": check_joint, "logistic": check_logistic}
