"""Command-line entry point: ``qgaids {synth,preprocess,pretrain,optimize,evaluate,report}``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 missing or
unreadable input, 4 schema or format-version mismatch.

Config files are ``key = value`` lines with dotted section prefixes
(``qga.population = 20``); command-line flags override file values. Every
subsystem seed is derived from the root ``--seed`` with
:func:`qgaids.seeding.derive_seed`.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics
from .dataset import (EncodedMatrix, FeatureSchema, NormalizationParams, SplitSpec,
                      encode, fit_normalizer, identity_normalizer, load_csv, load_schema,
                      split, split_indices, synth_dataset, synth_schema)
from .detect import ModelBundle, optimize_pipeline, predict_end_to_end, score_bundle
from .errors import (ConfigError, DataError, FormatVersionError, InvalidDimensions,
                     NotTemporal, PipelineError, SchemaMismatch)
from .qga import FitnessWeights, QGAConfig
from .seeding import derive_seed
from .selfsup import AugmentationConfig, SSLConfig, load_checkpoint, save_checkpoint, train_ssl

log = logging.getLogger("qgaids")

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_SCHEMA = 0, 2, 3, 4

DATA_FILE = "data.qgz"
SCHEMA_FILE = "schema.json"
NORM_FILE = "normalization.json"


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- configuration -----------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"config line {lineno}: expected key=value")
        out[key.strip()] = value.strip()
    return out


def _bool(v: str) -> bool:
    lv = v.strip().lower()
    if lv in ("1", "true", "yes", "on"):
        return True
    if lv in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _opt_float(v: str) -> Optional[float]:
    return None if v.strip().lower() in ("", "auto", "none") else float(v)


_SSL_KEYS = {"tau": float, "lambda_c": float, "lambda_m": float, "lambda_t": _opt_float,
             "batch_size": int, "epochs": int, "learning_rate": float, "momentum": float,
             "hidden_dim": int, "embed_dim": int, "proj_dim": int}
_AUG_KEYS = {"noise_sigma": float, "mask_prob": float}
_QGA_KEYS = {"population": int, "generations": int, "delta_theta_magnitude": float,
             "stagnation_patience": int, "workers": int}
_FIT_KEYS = {"w_acc": float, "w_fpr": float, "w_cost": float}


@dataclass
class RunConfig:
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    ssl: SSLConfig = field(default_factory=SSLConfig)
    qga: QGAConfig = field(default_factory=QGAConfig)
    weights: FitnessWeights = field(default_factory=FitnessWeights)

    @classmethod
    def from_pairs(cls, pairs: dict[str, str]) -> "RunConfig":
        seed = int(pairs.get("seed", 0))
        ssl_kw, aug_kw, qga_kw, fit_kw = {}, {}, {}, {}
        fractions, stratified = (0.6, 0.2, 0.2), True
        try:
            for key, raw in pairs.items():
                section, _, name = key.rpartition(".")
                if key == "seed":
                    continue
                if section == "split" and name == "fractions":
                    fractions = tuple(float(x) for x in raw.split(","))
                elif section == "split" and name == "stratified":
                    stratified = _bool(raw)
                elif section == "ssl" and name in _SSL_KEYS:
                    ssl_kw[name] = _SSL_KEYS[name](raw)
                elif section == "ssl.augment" and name in _AUG_KEYS:
                    aug_kw[name] = _AUG_KEYS[name](raw)
                elif section == "qga" and name in _QGA_KEYS:
                    qga_kw[name] = _QGA_KEYS[name](raw)
                elif section == "fitness" and name in _FIT_KEYS:
                    fit_kw[name] = _FIT_KEYS[name](raw)
                else:
                    raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None
        return cls(
            seed=seed,
            split=SplitSpec(fractions, derive_seed(seed, "split"), stratified),
            ssl=SSLConfig(seed=derive_seed(seed, "ssl"), augment=AugmentationConfig(**aug_kw),
                          **ssl_kw),
            qga=QGAConfig(seed=derive_seed(seed, "qga"), **qga_kw),
            weights=FitnessWeights(**fit_kw),
        )


_FLAG_KEYS = {
    "lambda_c": "ssl.lambda_c", "lambda_m": "ssl.lambda_m", "lambda_t": "ssl.lambda_t",
    "tau": "ssl.tau", "epochs": "ssl.epochs", "batch_size": "ssl.batch_size",
    "ssl_lr": "ssl.learning_rate", "hidden_dim": "ssl.hidden_dim", "embed_dim": "ssl.embed_dim",
    "population": "qga.population", "generations": "qga.generations",
    "delta_theta": "qga.delta_theta_magnitude", "patience": "qga.stagnation_patience",
    "workers": "qga.workers", "w_acc": "fitness.w_acc", "w_fpr": "fitness.w_fpr",
    "w_cost": "fitness.w_cost",
}


def load_run_config(args: argparse.Namespace) -> RunConfig:
    pairs: dict[str, str] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise CLIError(EXIT_INPUT, f"config file not found: {path}")
        pairs.update(parse_config_text(path.read_text(encoding="utf-8")))
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            pairs[key] = str(v)
    return RunConfig.from_pairs(pairs)


# -- artifact helpers --------------------------------------------------------

def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise CLIError(EXIT_CONFIG, f"missing --{what}")
    p = Path(path)
    if not p.exists():
        raise CLIError(EXIT_INPUT, f"{what} not found: {p}")
    return p


def _load_matrix(path: Path) -> EncodedMatrix:
    try:
        return EncodedMatrix.load(path)
    except FormatVersionError:
        raise
    except Exception as exc:
        raise CLIError(EXIT_INPUT, f"cannot read dataset {path}: {exc}") from None


def _dataset_context(data_path: Path, data: EncodedMatrix) -> tuple[FeatureSchema,
                                                                    NormalizationParams]:
    """Schema and normalizer stored next to a dataset artifact (synth falls back to identity)."""
    schema_p, norm_p = data_path.parent / SCHEMA_FILE, data_path.parent / NORM_FILE
    if schema_p.exists() and norm_p.exists():
        schema = FeatureSchema.from_dict(json.loads(schema_p.read_text()))
        return schema, NormalizationParams.from_dict(json.loads(norm_p.read_text()))
    if data.dataset_id == "synth":
        schema = synth_schema(data.width)
        return schema, identity_normalizer(schema)
    raise CLIError(EXIT_INPUT, f"no {SCHEMA_FILE}/{NORM_FILE} next to {data_path}")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _emit(args, obj: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(obj, sort_keys=True))
    else:
        print(text, end="" if text.endswith("\n") else "\n")


# -- commands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    seed = 0 if args.seed is None else args.seed
    data, informative = synth_dataset(args.n, args.informative, args.noise, args.sep, seed)
    out = Path(args.out)
    data.save(out / DATA_FILE)
    _write_json(out / "informative.json", {"informative": list(informative), "n": args.n,
                                           "d_inf": args.informative, "d_noise": args.noise,
                                           "separation": args.sep, "seed": seed})
    _emit(args, {"data": str(out / DATA_FILE), "informative": list(informative)},
          f"wrote {out / DATA_FILE} ({data.n_rows} x {data.width}); informative={list(informative)}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = load_run_config(args)
    try:
        schema = load_schema(args.schema)
    except SchemaMismatch as exc:
        raise CLIError(EXIT_INPUT, str(exc)) from None
    csv_path = _require(args.csv, "csv")
    table = load_csv(csv_path, schema, header=not args.no_header)
    # file order is pseudo-time, so the normalizer sees the leading block only
    train_idx, _, _ = split_indices([0] * len(table), True, cfg.split)
    params = fit_normalizer(table.take(train_idx))
    data = encode(table, params, schema, temporal=True)
    out = Path(args.out)
    data.save(out / DATA_FILE)
    _write_json(out / SCHEMA_FILE, schema.to_dict())
    _write_json(out / NORM_FILE, params.to_dict())
    _emit(args, {"data": str(out / DATA_FILE), "rows": data.n_rows, "width": data.width},
          f"wrote {out / DATA_FILE} ({data.n_rows} x {data.width})")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = load_run_config(args)
    data_path = _require(args.data, "data")
    data = _load_matrix(data_path)
    train, _, _ = split(data, cfg.split)
    t0 = time.perf_counter()
    result = train_ssl(train, cfg.ssl)
    seconds = time.perf_counter() - t0
    out = Path(args.out)
    save_checkpoint(result, out / "checkpoint.qgz")
    (out / "loss_curve.csv").write_text(
        "epoch,loss\n" + "".join(f"{i + 1},{v!r}\n" for i, v in enumerate(result.loss_curve)))
    _write_json(out / "pretrain_timing.json", {"ssl_seconds": seconds})
    final = result.loss_curve[-1] if result.loss_curve else float("nan")
    _emit(args, {"checkpoint": str(out / "checkpoint.qgz"), "final_loss": final,
                 "epochs": len(result.loss_curve)},
          f"final L_SSL = {final:.6f} after {len(result.loss_curve)} epochs")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = load_run_config(args)
    data_path = _require(args.data, "data")
    ckpt_path = _require(args.checkpoint, "checkpoint")
    data = _load_matrix(data_path)
    try:
        ssl = load_checkpoint(ckpt_path)
    except FormatVersionError:
        raise
    except Exception as exc:
        raise CLIError(EXIT_INPUT, f"cannot read checkpoint {ckpt_path}: {exc}") from None
    if ssl.encoder.input_dim != data.width:
        raise SchemaMismatch(f"checkpoint expects {ssl.encoder.input_dim} columns, "
                             f"dataset has {data.width}")
    schema, norm = _dataset_context(data_path, data)
    train, val, test = split(data, cfg.split)
    bundle, report = optimize_pipeline(train, val, ssl, cfg.qga, cfg.weights, schema, norm,
                                       run_oracle=args.oracle,
                                       provenance={"root_seed": cfg.seed})
    out = Path(args.out)
    bundle.save(out / "bundle.qgz")
    test.save(out / "test.qgz")
    timing_p = ckpt_path.parent / "pretrain_timing.json"
    ssl_seconds = json.loads(timing_p.read_text())["ssl_seconds"] if timing_p.exists() else 0.0
    _write_json(out / "timing.json", {"ssl_seconds": ssl_seconds,
                                      "search_seconds": report.pop("search_time"),
                                      "generation_seconds": report.pop("generation_seconds")})
    _write_json(out / "run_report.json", report)
    lines = [f"fitness {report['fitness']:.6f} (acc {report['accuracy']:.4f}, "
             f"fpr {report['fpr']:.4f}, cost {report['cost']:.4f})",
             f"subset {report['subset']} of m={report['budget']['m']}; "
             f"evaluations {report['evaluations_used']}",
             f"bundle digest {report['bundle_digest']}"]
    if "oracle" in report:
        lines.append(f"oracle optimum {report['oracle']['fitness']:.6f} "
                     f"(gap {report['oracle']['gap']:.6f})")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bundle_path = _require(args.bundle, "bundle")
    try:
        bundle = ModelBundle.load(bundle_path)
    except FormatVersionError:
        raise
    except Exception as exc:
        raise CLIError(EXIT_INPUT, f"cannot read bundle {bundle_path}: {exc}") from None
    if args.csv:
        csv_path = _require(args.csv, "csv")
        schema = load_schema(args.schema) if args.schema else bundle.schema
        table = load_csv(csv_path, schema, header=not args.no_header)
        pred = predict_end_to_end(bundle, table)
        y = np.array([schema.binarize(r[schema.label_index]) for r in table.rows])
        counts = metrics.confusion(y, pred.labels)
    else:
        data = _load_matrix(_require(args.data, "data"))
        counts, pred = score_bundle(bundle, data)
    timing = {}
    if args.timing:
        timing = json.loads(_require(args.timing, "timing").read_text())
    record = metrics.RunRecord(args.method, metrics.scores(counts),
                               timing.get("ssl_seconds", 0.0), timing.get("search_seconds", 0.0),
                               counts)
    if args.out:
        out = Path(args.out)
        _write_json(out / "metrics.json", {k: v for k, v in record.to_dict().items()
                                           if k not in ("training_time", "ssl_time",
                                                        "search_time")})
        _write_json(out / "evaluation.json", record.to_dict())
    payload = dict(record.to_dict(), rows_per_second=pred.rows_per_second)
    _emit(args, payload, metrics.render_text([record])
          + f"throughput: {pred.rows_per_second:.0f} rows/s\n")
    return EXIT_OK


def cmd_report(args) -> int:
    runs = []
    for p in args.runs:
        path = _require(p, "runs")
        obj = json.loads(path.read_text())
        for rec in obj if isinstance(obj, list) else [obj]:
            runs.append(metrics.RunRecord.from_dict(rec))
    if args.published:
        for row in metrics.PUBLISHED_ROWS.values():
            s = metrics.Scores(*(row[k] / 100 for k in ("accuracy", "precision", "recall",
                                                        "f1", "fpr")))
            runs.append(metrics.RunRecord(row["method"], s, 0.0, row["training_time"]))
    out = metrics.report(runs, args.out)
    _emit(args, {"records": out["records"]}, out["text"])
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--json", action="store_true", help="machine-readable stdout")


def _hyper_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("overrides")
    for flag, typ in (("lambda-c", float), ("lambda-m", float), ("lambda-t", float),
                      ("tau", float), ("epochs", int), ("batch-size", int), ("ssl-lr", float),
                      ("hidden-dim", int), ("embed-dim", int), ("population", int),
                      ("generations", int), ("delta-theta", float), ("patience", int),
                      ("workers", int), ("w-acc", float), ("w-fpr", float), ("w-cost", float)):
        g.add_argument(f"--{flag}", type=typ)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgaids", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a planted-feature dataset")
    _common(p)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--informative", type=int, default=4)
    p.add_argument("--noise", type=int, default=8)
    p.add_argument("--sep", type=float, default=3.0)
    p.set_defaults(func=cmd_synth, out_default="synth")

    p = sub.add_parser("preprocess", help="encode a traffic CSV")
    _common(p)
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", required=True, help="schema file or bundled id (nsl_kdd, unsw_nb15)")
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=cmd_preprocess, out_default="preprocessed")

    p = sub.add_parser("pretrain", help="self-supervised encoder pretraining")
    _common(p)
    _hyper_flags(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_pretrain, out_default="pretrain")

    p = sub.add_parser("optimize", help="qubit search + bundle assembly")
    _common(p)
    _hyper_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--oracle", action="store_true", help="also run the exhaustive oracle")
    p.set_defaults(func=cmd_optimize, out_default="optimize")

    p = sub.add_parser("evaluate", help="score a bundle on held-out data")
    _common(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", help="encoded dataset artifact")
    p.add_argument("--csv", help="raw CSV scored end to end")
    p.add_argument("--schema", help="schema for --csv (defaults to the bundle's)")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--timing", help="timing.json from optimize")
    p.add_argument("--method", default="QGA-SSL IDS (this run)")
    p.set_defaults(func=cmd_evaluate, out_default=None)

    p = sub.add_parser("report", help="comparison table from evaluation records")
    _common(p)
    p.add_argument("runs", nargs="+", help="evaluation.json files")
    p.add_argument("--published", action="store_true", help="append the published rows")
    p.set_defaults(func=cmd_report, out_default=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.out is None:
        args.out = args.out_default
    if args.command == "evaluate" and not (args.data or args.csv):
        parser.error("evaluate needs --data or --csv")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (SchemaMismatch, FormatVersionError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ConfigError, InvalidDimensions, NotTemporal) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PipelineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
