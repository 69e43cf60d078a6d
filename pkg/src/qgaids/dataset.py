"""Traffic-table ingestion, min-max encoding, synthetic planted-feature data and splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import store
from .errors import (ClassMissing, EmptyFile, EmptyTable, InvalidDimensions,
                     MissingColumn, NonNumericContinuous, SchemaMismatch, TooFewRows)

KINDS = ("continuous", "categorical", "label")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column layout of a traffic CSV.

    ``negative_labels`` holds the raw label strings that mean normal traffic
    (compared case-insensitively); every other label is an attack.
    """

    dataset_id: str
    columns: tuple[tuple[str, str], ...]
    negative_labels: frozenset[str] = frozenset({"normal", "0"})

    def __post_init__(self):
        names = [n for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"{self.dataset_id}: duplicate column names")
        bad = [k for _, k in self.columns if k not in KINDS]
        if bad:
            raise SchemaMismatch(f"{self.dataset_id}: unknown column kinds {bad}")
        if sum(k == "label" for _, k in self.columns) != 1:
            raise SchemaMismatch(f"{self.dataset_id}: need exactly one label column")
        if len(self.columns) < 2:
            raise SchemaMismatch(f"{self.dataset_id}: no feature columns")
        object.__setattr__(self, "negative_labels",
                           frozenset(s.strip().lower() for s in self.negative_labels))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.columns]

    @property
    def feature_columns(self) -> list[tuple[str, str]]:
        return [(n, k) for n, k in self.columns if k != "label"]

    @property
    def label_index(self) -> int:
        return next(i for i, (_, k) in enumerate(self.columns) if k == "label")

    def binarize(self, raw: str) -> int:
        return 0 if raw.strip().lower() in self.negative_labels else 1

    def to_dict(self) -> dict:
        return {"dataset_id": self.dataset_id, "columns": [list(c) for c in self.columns],
                "negative_labels": sorted(self.negative_labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(d["dataset_id"], tuple((n, k) for n, k in d["columns"]),
                   frozenset(d["negative_labels"]))


def parse_schema(text: str) -> FeatureSchema:
    """Parse the ``name = kind`` schema format; ``@key = value`` lines set metadata."""
    dataset_id = "custom"
    negatives = {"normal", "0"}
    columns = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SchemaMismatch(f"schema line {lineno}: expected 'name = kind'")
        key, value = key.strip(), value.strip()
        if key == "@dataset_id":
            dataset_id = value
        elif key == "@negative_labels":
            negatives = {v.strip() for v in value.split(",") if v.strip()}
        else:
            columns.append((key, value))
    return FeatureSchema(dataset_id, tuple(columns), frozenset(negatives))


def load_schema(path_or_id: str | Path) -> FeatureSchema:
    """Load a schema file, or a bundled one by id (``nsl_kdd``, ``unsw_nb15``)."""
    p = Path(path_or_id)
    if p.exists():
        return parse_schema(p.read_text(encoding="utf-8"))
    try:
        text = resources.files("qgaids.schemas").joinpath(f"{path_or_id}.schema").read_text(
            encoding="utf-8")
    except FileNotFoundError:
        raise SchemaMismatch(f"no schema file or bundled schema named {path_or_id!r}") from None
    return parse_schema(text)


@dataclass(frozen=True)
class RawTable:
    schema: FeatureSchema
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        width = len(self.schema.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise MissingColumn(f"row {i}: {len(row)} cells, schema has {width} columns")

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        j = self.schema.names.index(name)
        return [r[j] for r in self.rows]

    def take(self, idx: Sequence[int]) -> "RawTable":
        return RawTable(self.schema, tuple(self.rows[i] for i in idx))


def _parse_float(cell: str, where: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise NonNumericContinuous(f"{where}: {cell!r} is not numeric") from None
    if not math.isfinite(v):
        raise NonNumericContinuous(f"{where}: {cell!r} is not finite")
    return v


def load_csv(path: str | Path, schema: FeatureSchema, header: bool = True) -> RawTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if header:
        if not lines:
            raise EmptyFile(f"{path}: no header")
        names = [c.strip() for c in lines[0]]
        if names != schema.names:
            missing = [n for n in schema.names if n not in names]
            raise MissingColumn(f"{path}: header does not match schema {schema.dataset_id}"
                                + (f" (missing {missing[:5]})" if missing else ""))
        lines = lines[1:]
    if not lines:
        raise EmptyFile(f"{path}: no data rows")
    width = len(schema.columns)
    rows = []
    for i, row in enumerate(lines):
        if len(row) != width:
            raise MissingColumn(f"{path} row {i + 1}: {len(row)} cells, expected {width}")
        row = tuple(c.strip() for c in row)
        for j, (name, kind) in enumerate(schema.columns):
            if kind == "continuous":
                _parse_float(row[j], f"{path} row {i + 1} column {name}")
        rows.append(row)
    return RawTable(schema, tuple(rows))


@dataclass(frozen=True)
class NormalizationParams:
    ranges: dict[str, tuple[float, float]]
    vocab: dict[str, tuple[str, ...]]

    def to_dict(self) -> dict:
        return {"ranges": {k: list(v) for k, v in self.ranges.items()},
                "vocab": {k: list(v) for k, v in self.vocab.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        return cls({k: (float(a), float(b)) for k, (a, b) in d["ranges"].items()},
                   {k: tuple(v) for k, v in d["vocab"].items()})


def fit_normalizer(train: RawTable) -> NormalizationParams:
    """Per-column min/max and sorted categorical vocabularies from training rows."""
    if len(train) == 0:
        raise EmptyTable("cannot fit a normalizer on an empty table")
    ranges, vocab = {}, {}
    for j, (name, kind) in enumerate(train.schema.columns):
        cells = [r[j] for r in train.rows]
        if kind == "continuous":
            vals = [_parse_float(c, name) for c in cells]
            ranges[name] = (min(vals), max(vals))
        elif kind == "categorical":
            vocab[name] = tuple(sorted(set(cells)))
    return NormalizationParams(ranges, vocab)


def identity_normalizer(schema: FeatureSchema) -> NormalizationParams:
    """Params that leave continuous values already in [0, 1] untouched."""
    return NormalizationParams({n: (0.0, 1.0) for n, k in schema.columns if k == "continuous"}, {})


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    values: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    row_order_is_temporal: bool = False
    dataset_id: str = "custom"

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.feature_names):
            raise InvalidDimensions("values must be N x len(feature_names)")
        if self.labels.shape != (self.values.shape[0],):
            raise InvalidDimensions("labels must have one entry per row")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def take(self, idx) -> "EncodedMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedMatrix(self.values[idx], self.labels[idx], self.feature_names,
                             self.row_order_is_temporal, self.dataset_id)

    def save(self, path: str | Path) -> Path:
        meta = {"feature_names": list(self.feature_names),
                "row_order_is_temporal": self.row_order_is_temporal,
                "dataset_id": self.dataset_id}
        return store.write_artifact(path, "encoded_matrix", meta,
                                    {"values": self.values, "labels": self.labels})

    @classmethod
    def load(cls, path: str | Path) -> "EncodedMatrix":
        meta, arrays = store.read_artifact(path, "encoded_matrix")
        return cls(arrays["values"], arrays["labels"], tuple(meta["feature_names"]),
                   bool(meta["row_order_is_temporal"]), meta["dataset_id"])


def encoded_feature_names(schema: FeatureSchema, params: NormalizationParams) -> list[str]:
    names = []
    for name, kind in schema.feature_columns:
        if kind == "continuous":
            names.append(name)
        else:
            names.extend(f"{name}={v}" for v in params.vocab[name])
    return names


def encode(table: RawTable, params: NormalizationParams, schema: FeatureSchema,
           temporal: bool = True) -> EncodedMatrix:
    """Min-max scale continuous columns (clipped to [0, 1]) and one-hot categoricals.

    Values outside the fitted range are clipped; a constant column encodes to 0;
    a category absent from the vocabulary yields an all-zero group.
    """
    if table.schema.names != schema.names:
        raise SchemaMismatch(f"table columns do not match schema {schema.dataset_id}")
    for name, kind in schema.feature_columns:
        if kind == "continuous" and name not in params.ranges:
            raise SchemaMismatch(f"normalizer has no range for {name!r}")
        if kind == "categorical" and name not in params.vocab:
            raise SchemaMismatch(f"normalizer has no vocabulary for {name!r}")
    n = len(table)
    blocks = []
    for j, (name, kind) in enumerate(schema.columns):
        cells = [r[j] for r in table.rows]
        if kind == "continuous":
            lo, hi = params.ranges[name]
            v = np.array([_parse_float(c, name) for c in cells], dtype=np.float64)
            if hi > lo:
                v = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
            else:
                v = np.zeros(n)
            blocks.append(v[:, None])
        elif kind == "categorical":
            lookup = {c: i for i, c in enumerate(params.vocab[name])}
            onehot = np.zeros((n, len(lookup)))
            for i, c in enumerate(cells):
                k = lookup.get(c)
                if k is not None:
                    onehot[i, k] = 1.0
            blocks.append(onehot)
    values = np.hstack(blocks) if blocks else np.zeros((n, 0))
    li = schema.label_index
    labels = np.array([schema.binarize(r[li]) for r in table.rows], dtype=np.int64)
    return EncodedMatrix(values, labels, tuple(encoded_feature_names(schema, params)),
                         temporal, schema.dataset_id)


def synth_schema(width: int) -> FeatureSchema:
    cols = tuple((f"f{j}", "continuous") for j in range(width)) + (("label", "label"),)
    return FeatureSchema("synth", cols, frozenset({"0"}))


def synth_dataset(n: int, d_inf: int, d_noise: int, separation: float,
                  seed: int) -> tuple[EncodedMatrix, tuple[int, ...]]:
    """Two Gaussian classes whose means differ by ``separation`` sd on ``d_inf`` columns.

    Informative columns land at seeded random positions among the ``d_inf + d_noise``
    columns; their indices are returned sorted. Each column is min-max scaled to [0, 1].
    """
    if n < 4 or d_inf < 1 or d_noise < 0 or not separation >= 0:
        raise InvalidDimensions(
            f"need n >= 4, d_inf >= 1, d_noise >= 0, separation >= 0; got "
            f"n={n}, d_inf={d_inf}, d_noise={d_noise}, separation={separation}")
    rng = np.random.default_rng(seed)
    d = d_inf + d_noise
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[: n // 2]] = 1
    x = rng.standard_normal((n, d))
    informative = np.sort(rng.permutation(d)[:d_inf])
    x[:, informative] += (labels[:, None] - 0.5) * separation
    lo, hi = x.min(axis=0), x.max(axis=0)
    x = (x - lo) / np.where(hi > lo, hi - lo, 1.0)
    m = EncodedMatrix(x, labels, tuple(f"f{j}" for j in range(d)), False, "synth")
    return m, tuple(int(i) for i in informative)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if len(self.fractions) != 3 or any(not 0 < f < 1 for f in self.fractions):
            raise InvalidDimensions(f"split fractions must lie in (0, 1): {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise InvalidDimensions(f"split fractions must sum to 1: {self.fractions}")


def _sizes(n: int, fractions) -> tuple[int, int, int]:
    a = int(round(fractions[0] * n))
    b = int(round(fractions[1] * n))
    a = min(max(a, 1), n - 2)
    b = min(max(b, 1), n - a - 1)
    return a, b, n - a - b


def split_indices(labels: np.ndarray, temporal: bool,
                  spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(labels)
    if n < 3:
        raise TooFewRows(f"cannot split {n} rows three ways")
    if temporal:
        # contiguous blocks keep neighbouring flows together; no shuffle, no stratification
        a, b, _ = _sizes(n, spec.fractions)
        idx = np.arange(n)
        return idx[:a], idx[a:a + b], idx[a + b:]
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(n)
        a, b, _ = _sizes(n, spec.fractions)
        return np.sort(perm[:a]), np.sort(perm[a:a + b]), np.sort(perm[a + b:])
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ClassMissing("stratified split needs both classes present")
    parts = ([], [], [])
    for c in classes:
        members = np.flatnonzero(labels == c)
        if len(members) < 3:
            raise TooFewRows(f"class {c} has {len(members)} rows; stratification needs 3")
        members = members[rng.permutation(len(members))]
        a, b, _ = _sizes(len(members), spec.fractions)
        parts[0].append(members[:a])
        parts[1].append(members[a:a + b])
        parts[2].append(members[a + b:])
    return tuple(np.sort(np.concatenate(p)) for p in parts)


def split(m: EncodedMatrix, spec: SplitSpec) -> tuple[EncodedMatrix, EncodedMatrix, EncodedMatrix]:
    """Disjoint, exhaustive train/val/test partition; block-wise when rows are temporal."""
    tr, va, te = split_indices(m.labels, m.row_order_is_temporal, spec)
    return m.take(tr), m.take(va), m.take(te)
