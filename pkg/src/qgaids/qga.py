"""Quantum-inspired genetic search over embedding subsets and classifier hyperparameters.

Each chromosome is a vector of real, nonnegative qubit amplitudes ``(a, b)`` with
``a^2 + b^2 = 1``; measuring a qubit yields 1 with probability ``b^2``. The first
``m`` qubits select embedding dimensions, the remaining ``n_h`` bits index the
hyperparameter grid. After each generation every qubit is rotated toward the
elitist best solution.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from scipy.special import expit

from .classifier import THRESHOLD, Hyper, fit_many, predict_labels, train_classifier
from .errors import ConfigError, LengthMismatch, SingleClassTraining, TooLarge
from .seeding import rng_for

INV_SQRT2 = 1.0 / math.sqrt(2.0)
MAX_ORACLE_BITS = 18
MAX_ORACLE_FEATURES = 14


# -- qubits ------------------------------------------------------------------

@dataclass(frozen=True)
class Qubit:
    a: float
    b: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or abs(self.a ** 2 + self.b ** 2 - 1.0) > 1e-9:
            raise ValueError(f"invalid qubit ({self.a}, {self.b})")

    @property
    def p1(self) -> float:
        return self.b ** 2


def rotate_raw(a, b, delta):
    """Plain 2x2 rotation, no quadrant clamp."""
    c, s = np.cos(delta), np.sin(delta)
    return a * c - b * s, a * s + b * c


def rotate_amplitudes(a, b, delta):
    """Rotate then fold back into the first quadrant, renormalized.

    A result that leaves the quadrant is snapped to the nearer axis, i.e. to the
    angle ``clip(atan2(b', a'), 0, pi/2)``.
    """
    a2, b2 = rotate_raw(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64),
                        np.asarray(delta, dtype=np.float64))
    out = (a2 < 0) | (b2 < 0)
    if np.any(out):
        theta = np.arctan2(b2, a2)
        to_one = out & (theta > math.pi / 4)
        to_zero = out & ~to_one
        a2 = np.where(to_one, 0.0, np.where(to_zero, 1.0, a2))
        b2 = np.where(to_one, 1.0, np.where(to_zero, 0.0, b2))
    # unrotated entries pass through bit-exact; the rest are renormalized against drift
    norm = np.where(np.asarray(delta) == 0.0, 1.0, np.sqrt(a2 * a2 + b2 * b2))
    return a2 / norm, b2 / norm


def rotate(q: Qubit, delta: float) -> Qubit:
    a, b = rotate_amplitudes(q.a, q.b, delta)
    return Qubit(float(a), float(b))


def delta_theta(bit: bool, best_bit: bool, current_worse_than_best: bool,
                magnitude: float) -> float:
    """Signed rotation angle steering ``bit`` toward ``best_bit``.

    Positive angles raise ``b^2`` (probability of 1). No rotation when the bits
    agree or when the current solution is at least as fit as the best.
    """
    if bool(bit) == bool(best_bit) or not current_worse_than_best:
        return 0.0
    return magnitude if best_bit else -magnitude


def delta_theta_vec(bits: np.ndarray, best_bits: np.ndarray, worse: bool,
                    magnitude: float) -> np.ndarray:
    if not worse:
        return np.zeros(len(bits))
    return np.where(bits == best_bits, 0.0, np.where(best_bits, magnitude, -magnitude))


@dataclass
class Chromosome:
    a: np.ndarray
    b: np.ndarray

    @property
    def n_q(self) -> int:
        return len(self.a)

    @property
    def probs(self) -> np.ndarray:
        return self.b ** 2

    def qubit(self, i: int) -> Qubit:
        return Qubit(float(self.a[i]), float(self.b[i]))

    def copy(self) -> "Chromosome":
        return Chromosome(self.a.copy(), self.b.copy())


def measure(c: Chromosome, rng: np.random.Generator) -> np.ndarray:
    """Sample a bitstring; the chromosome itself is left unchanged."""
    return rng.random(c.n_q) < c.probs


# -- decoding ----------------------------------------------------------------

@dataclass(frozen=True)
class HyperGrid:
    """Hyperparameter values addressed by chromosome bits; lengths must be powers of 2."""

    learning_rates: tuple[float, ...] = (0.3, 0.1, 0.03, 0.01)
    l2_penalties: tuple[float, ...] = (0.0, 1e-4, 1e-3, 1e-2)

    def __post_init__(self):
        for g in (self.learning_rates, self.l2_penalties):
            if len(g) < 1 or len(g) & (len(g) - 1):
                raise ConfigError(f"grid length {len(g)} is not a power of 2")

    @property
    def lr_bits(self) -> int:
        return len(self.learning_rates).bit_length() - 1

    @property
    def l2_bits(self) -> int:
        return len(self.l2_penalties).bit_length() - 1

    @property
    def n_bits(self) -> int:
        return self.lr_bits + self.l2_bits

    def cells(self) -> list[tuple[int, int]]:
        return list(itertools.product(range(len(self.learning_rates)),
                                      range(len(self.l2_penalties))))


DEFAULT_GRID = HyperGrid()
FIXED_GRID = HyperGrid((0.3,), (0.0,))


def _bits_to_int(bits) -> int:
    v = 0
    for bit in bits:
        v = (v << 1) | int(bool(bit))
    return v


def _int_to_bits(v: int, width: int) -> list[bool]:
    return [bool((v >> (width - 1 - i)) & 1) for i in range(width)]


@dataclass(frozen=True)
class MeasuredSolution:
    """A decoded bitstring; ``subset`` holds 0-based embedding indices."""

    bits: tuple[bool, ...]
    subset: tuple[int, ...]
    hyper: Hyper
    lr_index: int = 0
    l2_index: int = 0

    @property
    def key(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


def decode(bits: Sequence[bool], m: int, grid: HyperGrid = DEFAULT_GRID,
           probs: Optional[np.ndarray] = None) -> MeasuredSolution:
    """Split ``bits`` into a feature subset and grid indices.

    An empty subset is repaired by switching on the feature bit with the largest
    ``probs`` value (lowest index on ties; index 0 when ``probs`` is absent). The
    returned ``bits`` reflect the repair.
    """
    bits = [bool(b) for b in bits]
    if len(bits) != m + grid.n_bits:
        raise LengthMismatch(f"{len(bits)} bits, expected {m} + {grid.n_bits}")
    if m < 1:
        raise LengthMismatch("need at least one feature bit")
    subset = [i for i in range(m) if bits[i]]
    if not subset:
        j = 0 if probs is None else int(np.argmax(np.asarray(probs)[:m]))
        bits[j] = True
        subset = [j]
    lr_i = _bits_to_int(bits[m:m + grid.lr_bits])
    l2_i = _bits_to_int(bits[m + grid.lr_bits:])
    hyper = Hyper(grid.learning_rates[lr_i], grid.l2_penalties[l2_i])
    return MeasuredSolution(tuple(bits), tuple(subset), hyper, lr_i, l2_i)


# -- fitness -----------------------------------------------------------------

@dataclass(frozen=True)
class FitnessWeights:
    w_acc: float = 0.7
    w_fpr: float = 0.2
    w_cost: float = 0.1

    def __post_init__(self):
        if min(self.w_acc, self.w_fpr, self.w_cost) < 0:
            raise ConfigError("fitness weights must be >= 0")
        if self.w_acc + self.w_fpr <= 0:
            raise ConfigError("w_acc + w_fpr must be positive")

    def combine(self, acc: float, fpr: float, cost: float) -> float:
        return self.w_acc * acc + self.w_fpr * (1.0 - fpr) - self.w_cost * cost


@dataclass(frozen=True)
class FitnessBreakdown:
    fitness: float
    accuracy: float
    fpr: float
    cost: float
    single_class: bool = False


@dataclass(eq=False)
class EvaluationContext:
    """Train/validation embeddings with labels, fitness weights and a result cache."""

    Z_train: np.ndarray
    y_train: np.ndarray
    Z_val: np.ndarray
    y_val: np.ndarray
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.Z_train.shape[1] != self.Z_val.shape[1]:
            raise LengthMismatch("train and validation embeddings differ in width")
        if len(self.y_train) != self.Z_train.shape[0] or len(self.y_val) != self.Z_val.shape[0]:
            raise LengthMismatch("label vectors do not match row counts")

    @property
    def m(self) -> int:
        return self.Z_train.shape[1]

    def with_weights(self, weights: FitnessWeights) -> "EvaluationContext":
        if weights == self.weights:
            return self
        return EvaluationContext(self.Z_train, self.y_train, self.Z_val, self.y_val,
                                 weights, self.seed)


def _acc_fpr(y: np.ndarray, pred: np.ndarray) -> tuple[float, float]:
    acc = float(np.mean(pred == y))
    neg = y == 0
    fpr = float(np.mean(pred[neg] == 1)) if neg.any() else 0.0
    return acc, fpr


def evaluate_solution(sol: MeasuredSolution, ctx: EvaluationContext) -> FitnessBreakdown:
    """Fitness of one decoded solution with its accuracy / FPR / cost terms (cached)."""
    key = (sol.key, sol.hyper)
    hit = ctx._cache.get(key)
    if hit is not None:
        return hit
    cols = list(sol.subset)
    cost = len(cols) / ctx.m
    try:
        params = train_classifier(ctx.Z_train[:, cols], ctx.y_train, sol.hyper, ctx.seed)
    except SingleClassTraining:
        out = FitnessBreakdown(0.0, 0.0, 1.0, cost, single_class=True)
    else:
        acc, fpr = _acc_fpr(ctx.y_val, predict_labels(params, ctx.Z_val[:, cols]))
        out = FitnessBreakdown(ctx.weights.combine(acc, fpr, cost), acc, fpr, cost)
    ctx._cache[key] = out
    return out


def fitness(sol: MeasuredSolution, ctx: EvaluationContext) -> float:
    return evaluate_solution(sol, ctx).fitness


def batch_fitness(ctx: EvaluationContext, subsets: np.ndarray, lr_idx: np.ndarray,
                  l2_idx: np.ndarray, grid: HyperGrid = DEFAULT_GRID) -> np.ndarray:
    """Fitness of many (subset mask, grid cell) pairs via ``fit_many``.

    Independent of the per-solution route in ``evaluate_solution``; used by the
    exhaustive oracle and the random-search baseline.
    """
    subsets = np.asarray(subsets, dtype=bool)
    out = np.empty(len(subsets))
    if len(np.unique(ctx.y_train)) < 2:
        out[:] = 0.0
        return out
    y_val = np.asarray(ctx.y_val)
    neg = y_val == 0
    for li, ri in grid.cells():
        sel = np.flatnonzero((lr_idx == li) & (l2_idx == ri))
        if sel.size == 0:
            continue
        hyper = Hyper(grid.learning_rates[li], grid.l2_penalties[ri])
        for chunk in np.array_split(sel, max(1, sel.size // 1024)):
            W, b = fit_many(ctx.Z_train, ctx.y_train, subsets[chunk], hyper)
            pred = expit(ctx.Z_val @ W + b) >= THRESHOLD
            acc = np.mean(pred == y_val[:, None].astype(bool), axis=0)
            fpr = np.mean(pred[neg], axis=0) if neg.any() else np.zeros(len(chunk))
            cost = subsets[chunk].sum(axis=1) / ctx.m
            w = ctx.weights
            out[chunk] = w.w_acc * acc + w.w_fpr * (1.0 - fpr) - w.w_cost * cost
    return out


# -- evolution ---------------------------------------------------------------

@dataclass(frozen=True)
class QGAConfig:
    population: int = 20
    generations: int = 50
    delta_theta_magnitude: float = 0.05
    stagnation_patience: int = 15
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ConfigError("population must be >= 2")
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        if self.delta_theta_magnitude < 0:
            raise ConfigError("delta_theta_magnitude must be >= 0")
        if self.stagnation_patience < 1:
            raise ConfigError("stagnation_patience must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class BestRecord:
    bits: tuple[bool, ...]
    fitness: float
    generation_found: int
    evaluations_used: int


@dataclass
class EvolveResult:
    best: BestRecord
    solution: MeasuredSolution
    breakdown: FitnessBreakdown
    trace: list[float]
    generation_seconds: list[float]
    population: list[Chromosome]
    seen: list[float] = field(repr=False, default_factory=list)

    @property
    def generations_run(self) -> int:
        return len(self.trace)


def init_population(cfg: QGAConfig, n_q: int) -> list[Chromosome]:
    """``P`` chromosomes in uniform superposition."""
    if n_q < 1:
        raise ConfigError("n_q must be >= 1")
    return [Chromosome(np.full(n_q, INV_SQRT2), np.full(n_q, INV_SQRT2))
            for _ in range(cfg.population)]


def evolve(cfg: QGAConfig, weights: FitnessWeights, ctx: EvaluationContext,
           grid: HyperGrid = DEFAULT_GRID,
           on_generation: Optional[Callable[[int, list[Chromosome]], None]] = None
           ) -> EvolveResult:
    """Run the rotation-gate search with elitism and stagnation early stop.

    Candidate ``i`` of generation ``g`` measures with its own stream seeded by
    ``(seed, g, i)``; the best record is reduced in candidate order, so the result
    does not depend on ``cfg.workers``.
    """
    ctx = ctx.with_weights(weights)
    m = ctx.m
    pop = init_population(cfg, m + grid.n_bits)
    best: Optional[BestRecord] = None
    best_sol = best_bd = None
    trace, seconds, seen = [], [], []
    evaluations = 0
    stagnant = 0
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def candidate(g_i):
        g, i = g_i
        chrom = pop[i]
        bits = measure(chrom, rng_for(cfg.seed, g, i))
        sol = decode(bits, m, grid, chrom.probs)
        return sol, evaluate_solution(sol, ctx)

    try:
        for g in range(cfg.generations):
            t0 = time.perf_counter()
            jobs = [(g, i) for i in range(cfg.population)]
            results = list(pool.map(candidate, jobs)) if pool else [candidate(j) for j in jobs]
            evaluations += len(results)
            improved = False
            for sol, bd in results:
                seen.append(bd.fitness)
                if best is None or bd.fitness > best.fitness:
                    best = BestRecord(sol.bits, bd.fitness, g, evaluations)
                    best_sol, best_bd = sol, bd
                    improved = True
            best.evaluations_used = evaluations
            best_bits = np.array(best.bits)
            for chrom, (sol, bd) in zip(pop, results):
                deltas = delta_theta_vec(np.array(sol.bits), best_bits,
                                         bd.fitness < best.fitness, cfg.delta_theta_magnitude)
                if np.any(deltas):
                    chrom.a, chrom.b = rotate_amplitudes(chrom.a, chrom.b, deltas)
            trace.append(best.fitness)
            seconds.append(time.perf_counter() - t0)
            if on_generation is not None:
                on_generation(g, pop)
            stagnant = 0 if improved else stagnant + 1
            if stagnant >= cfg.stagnation_patience:
                break
    finally:
        if pool:
            pool.shutdown()
    return EvolveResult(best, best_sol, best_bd, trace, seconds, pop, seen)


@dataclass
class SearchResult:
    bits: tuple[bool, ...]
    fitness: float
    evaluations: int
    trace: list[float] = field(default_factory=list)


def random_search(ctx: EvaluationContext, n_samples: int, seed: int,
                  grid: HyperGrid = DEFAULT_GRID) -> SearchResult:
    """Budget baseline: ``n_samples`` uniform bitstrings, best fitness kept."""
    m = ctx.m
    rng = rng_for(seed, "random_search")
    raw = rng.random((n_samples, m + grid.n_bits)) < 0.5
    sols = [decode(r, m, grid) for r in raw]
    masks = np.zeros((n_samples, m), dtype=bool)
    for k, s in enumerate(sols):
        masks[k, list(s.subset)] = True
    vals = batch_fitness(ctx, masks, np.array([s.lr_index for s in sols]),
                         np.array([s.l2_index for s in sols]), grid)
    k = int(np.argmax(vals))
    return SearchResult(sols[k].bits, float(vals[k]), n_samples,
                        list(np.maximum.accumulate(vals)))


def exhaustive_oracle(ctx: EvaluationContext, grid: HyperGrid = DEFAULT_GRID,
                      prune: bool = False) -> SearchResult:
    """Best of every nonempty subset x grid cell; ties go to the smallest bitstring.

    With ``prune=True`` subsets are visited by increasing size and a whole size
    class is skipped once ``w_acc + w_fpr - w_cost * k / m`` (the fitness ceiling at
    size ``k``) falls strictly below the best value found. The argmax is unchanged;
    only ``evaluations`` shrinks.
    """
    m = ctx.m
    if m > MAX_ORACLE_FEATURES or m + grid.n_bits > MAX_ORACLE_BITS:
        raise TooLarge(f"m={m}, n_h={grid.n_bits}: exhaustive search limited to "
                       f"m <= {MAX_ORACLE_FEATURES} and m + n_h <= {MAX_ORACLE_BITS}")
    codes = np.arange(1, 2 ** m)
    masks = ((codes[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(bool)
    sizes = masks.sum(axis=1)
    cells = grid.cells()
    w = ctx.weights
    best_val, best_code = -np.inf, None
    evaluations = 0
    groups = [np.flatnonzero(sizes == k) for k in range(1, m + 1)] if prune else [np.arange(len(codes))]
    for sel in groups:
        k = int(sizes[sel[0]])
        if prune and w.w_acc + w.w_fpr - w.w_cost * k / m < best_val:
            break
        sub = np.tile(masks[sel], (len(cells), 1))
        lr_idx = np.repeat([c[0] for c in cells], len(sel))
        l2_idx = np.repeat([c[1] for c in cells], len(sel))
        vals = batch_fitness(ctx, sub, lr_idx, l2_idx, grid)
        evaluations += len(vals)
        full = (np.tile(codes[sel], len(cells)) << grid.n_bits) | (lr_idx << grid.l2_bits) | l2_idx
        for v, c in zip(vals, full):
            if v > best_val or (v == best_val and c < best_code):
                best_val, best_code = float(v), int(c)
    bits = tuple(_int_to_bits(best_code, m + grid.n_bits))
    return SearchResult(bits, best_val, evaluations)
