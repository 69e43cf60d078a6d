"""Binary detection metrics from confusion counts; attack (1) is the positive class.

A ratio with a zero denominator is reported as ``None`` rather than coerced to 0.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, LengthMismatch

UNDEFINED = None
TABLE_COLUMNS = ("Method", "Accuracy (%)", "Precision (%)", "Recall (%)", "F1-score (%)",
                 "FPR (%)", "Training Time (s)")

# Published NSL-KDD / UNSW-NB15 rows for side-by-side display only; never asserted.
PUBLISHED_ROWS = {
    "nsl_kdd": {"method": "Proposed QGA-SSL IDS (published, NSL-KDD)", "accuracy": 96.7,
                "precision": 96.2, "recall": 95.9, "f1": 96.0, "fpr": 3.2,
                "training_time": 580.0},
    "unsw_nb15": {"method": "Proposed QGA-SSL IDS (published, UNSW-NB15)", "accuracy": 95.2,
                  "precision": 94.6, "recall": 94.1, "f1": 94.3, "fpr": 4.1,
                  "training_time": 640.0},
}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Scores:
    accuracy: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    fpr: Optional[float]


def confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> ConfusionCounts:
    y = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if y.shape != p.shape:
        raise LengthMismatch(f"y_true has {y.shape}, y_pred has {p.shape}")
    if y.size == 0:
        raise EmptyInput("no rows to score")
    return ConfusionCounts(tp=int(np.sum(y & p)), fp=int(np.sum(~y & p)),
                           tn=int(np.sum(~y & ~p)), fn=int(np.sum(y & ~p)))


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else UNDEFINED


def scores(c: ConfusionCounts) -> Scores:
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    # 2PR/(P+R) rewritten over counts so that exact ratios stay exact
    f1 = UNDEFINED if precision is None or recall is None else 2 * c.tp / (2 * c.tp + c.fp + c.fn)
    return Scores(accuracy=(c.tp + c.tn) / c.total, precision=precision, recall=recall,
                  f1=f1, fpr=_ratio(c.fp, c.fp + c.tn))


@dataclass(frozen=True)
class RunRecord:
    method: str
    scores: Scores
    ssl_time: float = 0.0
    search_time: float = 0.0
    counts: Optional[ConfusionCounts] = None

    @property
    def training_time(self) -> float:
        return self.ssl_time + self.search_time

    def to_dict(self) -> dict:
        d = {"method": self.method, **asdict(self.scores),
             "training_time": self.training_time, "ssl_time": self.ssl_time,
             "search_time": self.search_time}
        if self.counts is not None:
            d["counts"] = asdict(self.counts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        s = Scores(*(d[k] for k in ("accuracy", "precision", "recall", "f1", "fpr")))
        counts = ConfusionCounts(**d["counts"]) if d.get("counts") else None
        return cls(d["method"], s, d.get("ssl_time", 0.0), d.get("search_time", 0.0), counts)


def _pct(v: Optional[float]) -> str:
    return "undefined" if v is None else f"{100 * v:.1f}"


def table_rows(runs: Sequence[RunRecord]) -> list[list[str]]:
    rows = [list(TABLE_COLUMNS)]
    for r in runs:
        s = r.scores
        rows.append([r.method, _pct(s.accuracy), _pct(s.precision), _pct(s.recall),
                     _pct(s.f1), _pct(s.fpr), f"{r.training_time:.1f}"])
    return rows


def render_text(runs: Sequence[RunRecord]) -> str:
    rows = table_rows(runs)
    widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
    lines = []
    for i, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                               for j, (c, w) in enumerate(zip(r, widths))).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_csv(runs: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(table_rows(runs))
    return buf.getvalue()


def report(runs: Sequence[RunRecord], out_dir: str | Path | None = None) -> dict:
    """Comparison table as text, CSV and JSON records; written to ``out_dir`` when given."""
    if not runs:
        raise EmptyInput("report needs at least one run")
    out = {"text": render_text(runs), "csv": render_csv(runs),
           "records": [r.to_dict() for r in runs]}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(out["text"])
        (out_dir / "report.csv").write_text(out["csv"])
        (out_dir / "report.json").write_text(json.dumps(out["records"], indent=2, sort_keys=True))
    return out
