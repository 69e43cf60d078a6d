"""Hybrid search orchestration and the deployable detector bundle.

``optimize_pipeline`` embeds the train/validation splits with a pretrained
encoder, runs the qubit search over embedding subsets and classifier
hyperparameters, retrains the classifier on train+val with the winner and packs
everything needed for inference into a :class:`ModelBundle`.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import store
from .classifier import ClassifierParams, Hyper, predict_scores, train_classifier
from .dataset import (EncodedMatrix, FeatureSchema, NormalizationParams, RawTable, encode,
                      encoded_feature_names)
from .errors import SchemaMismatch
from .metrics import ConfusionCounts, confusion
from .qga import (DEFAULT_GRID, EvaluationContext, FitnessWeights, HyperGrid, QGAConfig,
                  decode, evaluate_solution, evolve, exhaustive_oracle)
from .selfsup import Dense, EncoderParams, SSLResult, embed


@dataclass(eq=False)
class ModelBundle:
    schema: FeatureSchema
    normalization: NormalizationParams
    encoder: EncoderParams
    subset: tuple[int, ...]
    classifier: ClassifierParams
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.encoder.output_dim
        if not self.subset or any(not 0 <= i < m for i in self.subset):
            raise SchemaMismatch(f"subset {self.subset} outside embedding range 0..{m - 1}")
        if len(self.classifier.weights) != len(self.subset):
            raise SchemaMismatch("classifier weight count differs from subset size")
        width = len(encoded_feature_names(self.schema, self.normalization))
        if width != self.encoder.input_dim:
            raise SchemaMismatch(f"encoder expects {self.encoder.input_dim} inputs, "
                                 f"normalization yields {width}")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(encoded_feature_names(self.schema, self.normalization))

    def _payload(self) -> tuple[dict, dict[str, np.ndarray]]:
        meta = {"schema": self.schema.to_dict(), "normalization": self.normalization.to_dict(),
                "subset": list(self.subset), "bias": self.classifier.bias,
                "hyper": [self.classifier.hyper.learning_rate, self.classifier.hyper.l2_penalty],
                "encoder_dims": self.encoder.dims, "provenance": self.provenance}
        arrays = {"classifier.weights": self.classifier.weights}
        for i, layer in enumerate(self.encoder.layers):
            arrays[f"enc{i}.weight"] = layer.weight
            arrays[f"enc{i}.bias"] = layer.bias
        return meta, arrays

    def digest(self) -> str:
        meta, arrays = self._payload()
        h = hashlib.sha256(store.canonical_json(meta).encode("utf-8"))
        for name in sorted(arrays):
            a = np.ascontiguousarray(arrays[name], dtype=np.float64)
            h.update(name.encode("utf-8"))
            h.update(str(a.shape).encode("utf-8"))
            h.update(a.tobytes())
        return h.hexdigest()

    def save(self, path: str | Path) -> Path:
        meta, arrays = self._payload()
        return store.write_artifact(path, "model_bundle", meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        meta, arrays = store.read_artifact(path, "model_bundle")
        n_layers = len(meta["encoder_dims"]) - 1
        enc = EncoderParams([Dense(arrays[f"enc{i}.weight"], arrays[f"enc{i}.bias"])
                             for i in range(n_layers)])
        clf = ClassifierParams(arrays["classifier.weights"], float(meta["bias"]),
                               Hyper(*meta["hyper"]))
        return cls(FeatureSchema.from_dict(meta["schema"]),
                   NormalizationParams.from_dict(meta["normalization"]), enc,
                   tuple(meta["subset"]), clf, meta["provenance"])


def build_context(encoder: EncoderParams, train: EncodedMatrix, val: EncodedMatrix,
                  weights: FitnessWeights, seed: int = 0) -> EvaluationContext:
    return EvaluationContext(embed(encoder, train.values), train.labels,
                             embed(encoder, val.values), val.labels, weights, seed)


def optimize_pipeline(train: EncodedMatrix, val: EncodedMatrix, ssl: SSLResult,
                      qga_cfg: QGAConfig, weights: FitnessWeights, schema: FeatureSchema,
                      normalization: NormalizationParams, grid: HyperGrid = DEFAULT_GRID,
                      run_oracle: bool = False,
                      provenance: Optional[dict] = None) -> tuple[ModelBundle, dict]:
    """Search ``(subset, hyperparameters)`` on embeddings and assemble the bundle.

    The returned report carries the best-so-far trace, the fitness breakdown of
    the winner and the budget counters (evaluations, embedding width ``m``,
    subset size ``k``). ``run_oracle`` adds the exhaustive optimum and the gap.
    """
    if train.feature_names != val.feature_names:
        raise SchemaMismatch("train and validation splits have different feature layouts")
    t0 = time.perf_counter()
    ctx = build_context(ssl.encoder, train, val, weights, qga_cfg.seed)
    result = evolve(qga_cfg, weights, ctx, grid)
    sol, bd = result.solution, result.breakdown
    cols = list(sol.subset)
    Z_all = np.vstack([ctx.Z_train, ctx.Z_val])
    y_all = np.concatenate([ctx.y_train, ctx.y_val])
    final = train_classifier(Z_all[:, cols], y_all, sol.hyper, qga_cfg.seed)
    search_time = time.perf_counter() - t0

    report = {
        "trace": result.trace,
        "generation_seconds": result.generation_seconds,
        "best_bits": "".join("1" if b else "0" for b in sol.bits),
        "subset": cols,
        "hyper": {"learning_rate": sol.hyper.learning_rate, "l2_penalty": sol.hyper.l2_penalty},
        "fitness": result.best.fitness,
        "accuracy": bd.accuracy,
        "fpr": bd.fpr,
        "cost": bd.cost,
        "weights": {"w_acc": weights.w_acc, "w_fpr": weights.w_fpr, "w_cost": weights.w_cost},
        "generation_found": result.best.generation_found,
        "generations_run": result.generations_run,
        "evaluations_used": result.best.evaluations_used,
        "budget": {"population": qga_cfg.population, "generations": qga_cfg.generations,
                   "evaluations": result.best.evaluations_used, "m": ctx.m, "k": len(cols),
                   "n_train": int(len(ctx.y_train)), "encoder_depth": len(ssl.encoder.layers)},
        "search_time": search_time,
    }
    if run_oracle:
        oracle = exhaustive_oracle(ctx, grid, prune=True)
        report["oracle"] = {"fitness": oracle.fitness, "evaluations": oracle.evaluations,
                            "bits": "".join("1" if b else "0" for b in oracle.bits),
                            "gap": oracle.fitness - result.best.fitness}
    prov = {"seed": qga_cfg.seed, "fitness": result.best.fitness,
            "best_bits": report["best_bits"],
            "ssl_config_digest": store.digest_of(ssl.config.to_dict()),
            "qga_config_digest": store.digest_of(
                {k: v for k, v in asdict(qga_cfg).items() if k != "workers"}),
            "weights_digest": store.digest_of(report["weights"])}
    prov.update(provenance or {})
    bundle = ModelBundle(schema, normalization, ssl.encoder, tuple(cols), final, prov)
    report["bundle_digest"] = bundle.digest()
    return bundle, report


def refit_fitness(bundle_report: dict, ctx: EvaluationContext, m: int,
                  grid: HyperGrid = DEFAULT_GRID) -> float:
    """Re-evaluate the recorded winner on ``ctx`` without the search cache."""
    bits = [c == "1" for c in bundle_report["best_bits"]]
    fresh = EvaluationContext(ctx.Z_train, ctx.y_train, ctx.Z_val, ctx.y_val, ctx.weights,
                              ctx.seed)
    return evaluate_solution(decode(bits, m, grid), fresh).fitness


@dataclass(frozen=True, eq=False)
class Prediction:
    labels: np.ndarray
    scores: np.ndarray
    rows_per_second: float


def _classify(bundle: ModelBundle, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Z = embed(bundle.encoder, X)[:, list(bundle.subset)]
    scores = predict_scores(bundle.classifier, Z)
    return (scores >= 0.5).astype(np.int64), scores


def predict_encoded(bundle: ModelBundle, data: EncodedMatrix) -> Prediction:
    """Classify rows that are already encoded with the bundle's feature layout."""
    if data.feature_names != bundle.feature_names:
        raise SchemaMismatch(f"data layout ({data.width} columns, {data.dataset_id}) does not "
                             f"match bundle ({len(bundle.feature_names)} columns, "
                             f"{bundle.schema.dataset_id})")
    t0 = time.perf_counter()
    labels, scores = _classify(bundle, data.values)
    elapsed = max(time.perf_counter() - t0, 1e-9)
    return Prediction(labels, scores, data.n_rows / elapsed)


def predict_end_to_end(bundle: ModelBundle, rows: RawTable) -> Prediction:
    """Encode raw rows, embed, restrict to the selected dims and score."""
    if rows.schema.names != bundle.schema.names:
        raise SchemaMismatch(f"rows follow schema {rows.schema.dataset_id}, bundle expects "
                             f"{bundle.schema.dataset_id}")
    t0 = time.perf_counter()
    enc = encode(rows, bundle.normalization, bundle.schema)
    labels, scores = _classify(bundle, enc.values)
    elapsed = max(time.perf_counter() - t0, 1e-9)
    return Prediction(labels, scores, len(rows) / elapsed)


def score_bundle(bundle: ModelBundle, data: EncodedMatrix) -> tuple[ConfusionCounts, Prediction]:
    """Confusion counts of the bundle on an encoded split."""
    pred = predict_encoded(bundle, data)
    return confusion(data.labels, pred.labels), pred
