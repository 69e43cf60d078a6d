"""Self-supervised encoder pretraining with hand-written gradients.

Shapes follow the row-major convention ``Y = X @ W + b`` with ``W`` of shape
``(in, out)``. Every loss returns its value together with exact gradients; the
test-suite checks each against central finite differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import store
from .dataset import EncodedMatrix
from .errors import (ConfigError, DegenerateEmbedding, DimensionMismatch, InsufficientData,
                     NotTemporal, WindowTooShort)

EPS = 1e-12


@dataclass
class Dense:
    weight: np.ndarray
    bias: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight + self.bias

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape


@dataclass
class EncoderParams:
    """Dense stack ``d' -> h -> ... -> m``; ReLU between layers, identity on the output."""

    layers: list[Dense]

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise DimensionMismatch(f"layer dims do not chain: {prev.shape} -> {nxt.shape}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].shape[1]

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.shape[1] for layer in self.layers]


@dataclass
class ProjectionParams:
    layer: Dense


@dataclass
class AuxHeads:
    decoder: Dense  # m -> d', reconstructs masked inputs
    predictor: Dense  # m -> m, predicts the next row's embedding


@dataclass(frozen=True)
class AugmentationConfig:
    noise_sigma: float = 0.05
    mask_prob: float = 0.2

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0 <= self.mask_prob <= 1:
            raise ConfigError("mask_prob must lie in [0, 1]")


@dataclass(frozen=True)
class SSLConfig:
    """Pretraining hyperparameters.

    ``lambda_t=None`` means "0.5 when the data is temporal, otherwise 0"; an
    explicit positive value on non-temporal data raises ``NotTemporal``.
    """

    tau: float = 0.5
    lambda_c: float = 1.0
    lambda_m: float = 0.5
    lambda_t: Optional[float] = None
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    hidden_dim: int = 64
    embed_dim: int = 32
    proj_dim: int = 16
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        lams = (self.lambda_c, self.lambda_m, self.lambda_t or 0.0)
        if any(v < 0 for v in lams):
            raise ConfigError("loss weights must be >= 0")
        if self.lambda_c + self.lambda_m + (0.5 if self.lambda_t is None else self.lambda_t) <= 0:
            raise ConfigError("at least one loss weight must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.proj_dim < 2:
            raise ConfigError("proj_dim must be >= 2")

    def resolved_lambda_t(self, temporal: bool) -> float:
        if self.lambda_t is None:
            return 0.5 if temporal else 0.0
        return self.lambda_t

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SSLConfig":
        d = dict(d)
        d["augment"] = AugmentationConfig(**d.get("augment", {}))
        return cls(**d)


# -- augmentation ------------------------------------------------------------

def augment_batch(X: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator):
    """Jittered view, masked view and the mask for every row of ``X``."""
    noise = rng.standard_normal(X.shape)
    mask = rng.random(X.shape) < cfg.mask_prob
    view1 = np.clip(X + cfg.noise_sigma * noise, 0.0, 1.0)
    view2 = np.where(mask, 0.0, X)
    return view1, view2, mask


def augment(x: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator):
    v1, v2, mask = augment_batch(np.asarray(x, dtype=np.float64)[None, :], cfg, rng)
    return v1[0], v2[0], mask[0]


# -- encoder -----------------------------------------------------------------

BIAS_INIT = 0.01


def init_encoder(dims: list[int], rng: np.random.Generator) -> EncoderParams:
    """He-scaled weights; small positive biases so no row starts with a zero embedding."""
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        gain = 2.0 if i < len(dims) - 2 else 1.0
        layers.append(Dense(rng.standard_normal((a, b)) * np.sqrt(gain / a),
                            np.full(b, BIAS_INIT)))
    return EncoderParams(layers)


def _init_dense(a: int, b: int, rng: np.random.Generator) -> Dense:
    return Dense(rng.standard_normal((a, b)) * np.sqrt(1.0 / a), np.full(b, BIAS_INIT))


def encode_forward(enc: EncoderParams, X: np.ndarray):
    """Return the embeddings and the per-layer ``(input, pre-activation)`` cache."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != enc.input_dim:
        raise DimensionMismatch(f"encoder expects {enc.input_dim} columns, got shape {X.shape}")
    cache = []
    h = X
    last = len(enc.layers) - 1
    for i, layer in enumerate(enc.layers):
        pre = layer(h)
        cache.append((h, pre))
        h = pre if i == last else np.maximum(pre, 0.0)
    return h, cache


def encode_backward(enc: EncoderParams, cache, dH: np.ndarray):
    """Gradients ``[(dW, db), ...]`` per layer and the input gradient."""
    grads = [None] * len(enc.layers)
    g = dH
    for i in range(len(enc.layers) - 1, -1, -1):
        x_in, pre = cache[i]
        if i != len(enc.layers) - 1:
            g = g * (pre > 0)
        grads[i] = (x_in.T @ g, g.sum(axis=0))
        g = g @ enc.layers[i].weight.T
    return grads, g


# -- losses ------------------------------------------------------------------

def cosine_sim(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return float(u @ v / (max(np.linalg.norm(u), EPS) * max(np.linalg.norm(v), EPS)))


def ntxent_loss(Z: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """NT-Xent over ``2N`` rows where row ``i`` and row ``i + N`` form a positive pair.

    Every row acts as an anchor once; the loss is the mean over the ``2N`` anchors.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n2 = Z.shape[0]
    if n2 < 2 or n2 % 2:
        raise DimensionMismatch(f"need an even number (>= 2) of embeddings, got {n2}")
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms < EPS):
        raise DegenerateEmbedding("embedding with (near-)zero norm")
    n = n2 // 2
    U = Z / norms[:, None]
    S = U @ U.T / tau
    pos = np.concatenate([np.arange(n, n2), np.arange(n)])
    rows = np.arange(n2)
    logits = S.copy()
    logits[rows, rows] = -np.inf
    mx = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - mx)
    denom = ex.sum(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(denom[:, 0])
    loss = float(np.mean(lse - S[rows, pos]))

    G = ex / denom
    G[rows, pos] -= 1.0
    G /= n2
    dU = (G + G.T) @ U / tau
    # back through u = z / |z|
    dZ = (dU - U * np.sum(dU * U, axis=1, keepdims=True)) / norms[:, None]
    return loss, dZ


def mask_loss(heads: AuxHeads, H: np.ndarray, X_orig: np.ndarray, mask: np.ndarray):
    """Masked-feature reconstruction MSE over masked cells only.

    Returns ``(loss, {"H": dH, "decoder": (dW, db)})``; an empty mask gives zeros.
    """
    W, b = heads.decoder.weight, heads.decoder.bias
    if H.shape[1] != W.shape[0] or X_orig.shape != (H.shape[0], W.shape[1]) \
            or mask.shape != X_orig.shape:
        raise DimensionMismatch("mask_loss: inconsistent shapes")
    count = int(mask.sum())
    if count == 0:
        return 0.0, {"H": np.zeros_like(H), "decoder": (np.zeros_like(W), np.zeros_like(b))}
    R = H @ W + b
    diff = np.where(mask, R - X_orig, 0.0)
    loss = float(np.sum(diff ** 2) / count)
    dR = 2.0 * diff / count
    return loss, {"H": dR @ W.T, "decoder": (H.T @ dR, dR.sum(axis=0))}


def temporal_loss(heads: AuxHeads, H: np.ndarray, temporal: bool = True):
    """MSE between ``predictor(h_t)`` and a stop-gradient copy of ``h_{t+1}``."""
    if not temporal:
        raise NotTemporal("temporal loss needs rows in temporal order")
    if H.shape[0] < 2:
        raise WindowTooShort(f"temporal window of {H.shape[0]} rows; need >= 2")
    W, b = heads.predictor.weight, heads.predictor.bias
    if H.shape[1] != W.shape[0]:
        raise DimensionMismatch("temporal_loss: embedding width does not match predictor")
    P = H[:-1] @ W + b
    target = H[1:]
    diff = P - target
    loss = float(np.mean(diff ** 2))
    dP = 2.0 * diff / diff.size
    dH = np.zeros_like(H)
    dH[:-1] = dP @ W.T
    return loss, {"H": dH, "predictor": (H[:-1].T @ dP, dP.sum(axis=0))}


# -- parameter bundles -------------------------------------------------------

@dataclass
class SSLModel:
    encoder: EncoderParams
    projection: ProjectionParams
    heads: AuxHeads

    def named(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.encoder.layers):
            out[f"enc{i}.weight"] = layer.weight
            out[f"enc{i}.bias"] = layer.bias
        for name, layer in (("proj", self.projection.layer), ("dec", self.heads.decoder),
                            ("pred", self.heads.predictor)):
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
        return out

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.named().items()}

    @classmethod
    def from_named(cls, p: dict[str, np.ndarray]) -> "SSLModel":
        n_enc = sum(1 for k in p if k.startswith("enc") and k.endswith(".weight"))
        enc = EncoderParams([Dense(p[f"enc{i}.weight"], p[f"enc{i}.bias"]) for i in range(n_enc)])
        model = cls(enc, ProjectionParams(Dense(p["proj.weight"], p["proj.bias"])),
                    AuxHeads(Dense(p["dec.weight"], p["dec.bias"]),
                             Dense(p["pred.weight"], p["pred.bias"])))
        model.check()
        return model

    def check(self):
        m, d = self.encoder.output_dim, self.encoder.input_dim
        if self.projection.layer.shape[0] != m:
            raise DimensionMismatch("projection input != embedding width")
        if self.heads.decoder.shape != (m, d) or self.heads.predictor.shape != (m, m):
            raise DimensionMismatch("auxiliary heads inconsistent with encoder dims")

    def copy(self) -> "SSLModel":
        return SSLModel.from_named({k: v.copy() for k, v in self.named().items()})


def init_model(d_in: int, cfg: SSLConfig, rng: np.random.Generator) -> SSLModel:
    if not cfg.embed_dim < d_in:
        raise ConfigError(f"embedding width {cfg.embed_dim} must be smaller than input width {d_in}")
    enc = init_encoder([d_in, cfg.hidden_dim, cfg.embed_dim], rng)
    proj = ProjectionParams(_init_dense(cfg.embed_dim, cfg.proj_dim, rng))
    heads = AuxHeads(_init_dense(cfg.embed_dim, d_in, rng),
                     _init_dense(cfg.embed_dim, cfg.embed_dim, rng))
    return SSLModel(enc, proj, heads)


def _add_encoder_grads(grads: dict, enc_grads):
    for i, (dW, db) in enumerate(enc_grads):
        grads[f"enc{i}.weight"] += dW
        grads[f"enc{i}.bias"] += db


def ssl_components(model: SSLModel, X: np.ndarray, view1: np.ndarray, view2: np.ndarray,
                   mask: np.ndarray, cfg: SSLConfig, temporal: bool):
    """The three pretext losses, each with gradients over every model parameter.

    A component whose weight is zero is skipped and reported as ``(0.0, zeros)``.
    """
    lam_t = cfg.resolved_lambda_t(temporal)
    if lam_t > 0 and not temporal:
        raise NotTemporal("lambda_t > 0 requires data with temporal row order")
    enc = model.encoder
    out = {}

    g = model.zeros_like()
    loss_c = 0.0
    need_h2 = cfg.lambda_c > 0 or cfg.lambda_m > 0
    if need_h2:
        H2, c2 = encode_forward(enc, view2)
    if cfg.lambda_c > 0:
        H1, c1 = encode_forward(enc, view1)
        Wp = model.projection.layer.weight
        Z = np.vstack([model.projection.layer(H1), model.projection.layer(H2)])
        loss_c, dZ = ntxent_loss(Z, cfg.tau)
        n = H1.shape[0]
        dZ1, dZ2 = dZ[:n], dZ[n:]
        g["proj.weight"] += H1.T @ dZ1 + H2.T @ dZ2
        g["proj.bias"] += dZ.sum(axis=0)
        _add_encoder_grads(g, encode_backward(enc, c1, dZ1 @ Wp.T)[0])
        _add_encoder_grads(g, encode_backward(enc, c2, dZ2 @ Wp.T)[0])
    out["contrastive"] = (loss_c, g)

    g = model.zeros_like()
    loss_m = 0.0
    if cfg.lambda_m > 0:
        loss_m, mg = mask_loss(model.heads, H2, X, mask)
        g["dec.weight"] += mg["decoder"][0]
        g["dec.bias"] += mg["decoder"][1]
        _add_encoder_grads(g, encode_backward(enc, c2, mg["H"])[0])
    out["mask"] = (loss_m, g)

    g = model.zeros_like()
    loss_t = 0.0
    if lam_t > 0:
        H0, c0 = encode_forward(enc, X)
        loss_t, tg = temporal_loss(model.heads, H0, temporal)
        g["pred.weight"] += tg["predictor"][0]
        g["pred.bias"] += tg["predictor"][1]
        _add_encoder_grads(g, encode_backward(enc, c0, tg["H"])[0])
    out["temporal"] = (loss_t, g)
    return out


def ssl_loss(components: dict, cfg: SSLConfig, temporal: bool = False):
    """Weighted sum of the component losses and gradients."""
    weights = {"contrastive": cfg.lambda_c, "mask": cfg.lambda_m,
               "temporal": cfg.resolved_lambda_t(temporal)}
    total = 0.0
    grads = None
    for name, (loss, g) in components.items():
        w = weights[name]
        total += w * loss
        if grads is None:
            grads = {k: w * v for k, v in g.items()}
        else:
            for k, v in g.items():
                grads[k] = grads[k] + w * v
    return total, grads


# -- training ----------------------------------------------------------------

@dataclass
class SSLResult:
    model: SSLModel
    loss_curve: list[float]
    config: SSLConfig

    @property
    def encoder(self) -> EncoderParams:
        return self.model.encoder

    @property
    def projection(self) -> ProjectionParams:
        return self.model.projection

    @property
    def heads(self) -> AuxHeads:
        return self.model.heads


def _batches(n: int, size: int, temporal: bool, rng: np.random.Generator):
    if temporal:
        # contiguous windows keep temporal adjacency inside each batch
        starts = np.arange(0, n - 1, size)
        for s in starts[rng.permutation(len(starts))]:
            idx = np.arange(s, min(s + size, n))
            if len(idx) >= 2:
                yield idx
    else:
        perm = rng.permutation(n)
        for s in range(0, n, size):
            idx = perm[s:s + size]
            if len(idx) >= 2:
                yield idx


def train_ssl(data: EncodedMatrix, cfg: SSLConfig) -> SSLResult:
    """Mini-batch gradient descent with momentum on the joint pretext objective."""
    X = data.values
    temporal = data.row_order_is_temporal
    if X.shape[0] < cfg.batch_size:
        raise InsufficientData(f"{X.shape[0]} rows < batch_size {cfg.batch_size}")
    if cfg.resolved_lambda_t(temporal) > 0 and not temporal:
        raise NotTemporal("lambda_t > 0 requires data with temporal row order")
    rng = np.random.default_rng(cfg.seed)
    model = init_model(X.shape[1], cfg, rng)
    params = model.named()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    curve = []
    for _ in range(cfg.epochs):
        totals, sizes = [], []
        for idx in _batches(X.shape[0], cfg.batch_size, temporal, rng):
            xb = X[idx]
            v1, v2, mk = augment_batch(xb, cfg.augment, rng)
            comps = ssl_components(model, xb, v1, v2, mk, cfg, temporal)
            total, grads = ssl_loss(comps, cfg, temporal)
            for k, p in params.items():
                velocity[k] *= cfg.momentum
                velocity[k] -= cfg.learning_rate * grads[k]
                p += velocity[k]
            totals.append(total)
            sizes.append(len(idx))
        curve.append(float(np.average(totals, weights=sizes)))
    return SSLResult(model, curve, cfg)


def embed(enc: EncoderParams, X: np.ndarray) -> np.ndarray:
    return encode_forward(enc, X)[0]


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(result: SSLResult, path: str | Path) -> Path:
    meta = {"dims": result.encoder.dims, "config": result.config.to_dict(),
            "loss_curve": result.loss_curve}
    return store.write_artifact(path, "ssl_checkpoint", meta, result.model.named())


def load_checkpoint(path: str | Path) -> SSLResult:
    meta, arrays = store.read_artifact(path, "ssl_checkpoint")
    model = SSLModel.from_named(arrays)
    if model.encoder.dims != meta["dims"]:
        raise DimensionMismatch(f"{path}: stored dims {meta['dims']} != {model.encoder.dims}")
    return SSLResult(model, list(meta["loss_curve"]), SSLConfig.from_dict(meta["config"]))
