from pathlib import Path

import numpy as np
import pytest

from qgaids.dataset import SplitSpec, split, synth_dataset
from qgaids.qga import EvaluationContext, FitnessWeights

DATA = Path(__file__).parent / "data"


@pytest.fixture
def nsl_fixture() -> Path:
    return DATA / "nsl_kdd_20.csv"


@pytest.fixture(scope="session")
def small_ctx() -> EvaluationContext:
    """Raw 6-column synth features as a cheap embedding (2 informative)."""
    data, _ = synth_dataset(300, 2, 4, 3.0, seed=3)
    tr, va, _ = split(data, SplitSpec(seed=3))
    return EvaluationContext(tr.values, tr.labels, va.values, va.labels, FitnessWeights(), 0)


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. every entry of ``x`` (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
