"""Weighted KPI objective over surrogate predictions, solved by brute force or annealing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InputDomainError, NoFeasiblePointError
from .handover import CopVector
from .kpi import NormBounds
from .sweep import SweepGrid, _num
from .surrogate import BAND_TARGETS, KPI_TARGETS, TrainedModel, features

REFERENCE_WEIGHTS = ((0.33, 0.33), (0.8, 0.1), (0.1, 0.8), (0.1, 0.1))
COMPARISON_HEADER = (
    "alpha", "beta", "sa_median", "sa_min", "sa_max", "brute_force", "sa_evals", "bf_evals", "speedup",
)
MAX_START_DRAWS = 100


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float
    beta: float

    def __post_init__(self):
        # small slack so that e.g. 0.33 + 0.67 is not rejected on round-off
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta > 1 + 1e-12:
            raise InputDomainError(
                f"weights need alpha, beta >= 0 and alpha + beta <= 1, got ({self.alpha}, {self.beta})"
            )

    @property
    def gamma(self) -> float:
        return 1.0 - self.alpha - self.beta


@dataclass(frozen=True)
class Constraints:
    load_thresholds: tuple[float, ...] = (100.0, 100.0, 100.0)  # percent per band

    def __post_init__(self):
        if any(not 0 < t <= 100 for t in self.load_thresholds):
            raise InputDomainError(f"load thresholds must lie in (0, 100], got {self.load_thresholds}")

    @property
    def active(self) -> bool:
        return any(t < 100 for t in self.load_thresholds)


@dataclass(frozen=True)
class AnnealingSchedule:
    initial_temp: float = 1.0
    cooling_ratio: float | None = None  # None: reach final_temp on the last move
    budget: int = 2500
    neighbor_radius: int = 1
    seed: int = 0
    final_temp: float = 1e-3

    def __post_init__(self):
        if self.budget < 1:
            raise InputDomainError("budget must be at least 1")
        if self.initial_temp < 0:
            raise InputDomainError("initial_temp must be non-negative")
        if self.cooling_ratio is not None and not 0 < self.cooling_ratio < 1:
            raise InputDomainError("cooling_ratio must lie in (0, 1)")
        if self.neighbor_radius < 1:
            raise InputDomainError("neighbor_radius must be at least 1")

    def ratio(self) -> float:
        if self.cooling_ratio is not None:
            return self.cooling_ratio
        moves = self.budget - 1
        if moves <= 1 or self.initial_temp == 0:
            return 1.0
        return (self.final_temp / self.initial_temp) ** (1.0 / (moves - 1))


@dataclass
class OptimizationResult:
    best_cop: CopVector
    score: float
    evaluations: int
    feasible: bool
    components: tuple[float, float, float]  # normalized (edge RSRP, HOSR, load factor)
    index: tuple[int, ...] = ()
    best_history: list[float] = field(default_factory=list)


def objective(m_tilde: float, h_tilde: float, l_tilde: float, w: ObjectiveWeights):
    """alpha*M + beta*H + (1 - alpha - beta)*L on normalized KPIs."""
    return w.alpha * m_tilde + w.beta * h_tilde + (1.0 - w.alpha - w.beta) * l_tilde


def kpi_bounds(rows) -> dict[str, NormBounds]:
    """Min/max of each objective KPI over a dataset."""
    out = {}
    for name in KPI_TARGETS:
        v = np.array([r.target(name) for r in rows], dtype=float)
        out[name] = NormBounds(float(v.min()), float(v.max()))
    return out


def _normalized(preds: Mapping[str, np.ndarray], bounds: Mapping[str, NormBounds]):
    return tuple(np.clip(bounds[k].scale(preds[k]), 0.0, 1.0) for k in KPI_TARGETS)


def _feasible(preds: Mapping[str, np.ndarray], c: Constraints, n: int) -> np.ndarray:
    ok = np.ones(n, dtype=bool)
    if not c.active:
        return ok
    for name, thr in zip(BAND_TARGETS, c.load_thresholds):
        if thr < 100:
            if name not in preds:
                raise InputDomainError(f"load constraint on {name} needs a fitted {name} model")
            ok &= np.asarray(preds[name]) <= thr
    return ok


def _predict_all(models: TrainedModel, X: np.ndarray, c: Constraints) -> dict[str, np.ndarray]:
    names = list(KPI_TARGETS)
    if c.active:
        names += [b for b, t in zip(BAND_TARGETS, c.load_thresholds) if t < 100]
    return {k: models.predict_matrix(X, k) for k in names if k in models.regressors}


def score_cop(cop: CopVector, models: TrainedModel, bounds: Mapping[str, NormBounds],
              w: ObjectiveWeights, c: Constraints = Constraints()) -> tuple[float, bool]:
    """Objective of one COP vector on clamped normalized predictions, and its feasibility."""
    cop.validate()
    preds = _predict_all(models, cop.as_array()[None], c)
    m, h, l = (float(v[0]) for v in _normalized(preds, bounds))
    return float(objective(m, h, l, w)), bool(_feasible(preds, c, 1)[0])


class GridObjective:
    """Surrogate predictions for every point of a grid, computed in one pass.

    Brute force and annealing both read from here; annealing still counts
    each lookup as one objective evaluation.
    """

    def __init__(self, models: TrainedModel, grid: SweepGrid, bounds: Mapping[str, NormBounds],
                 c: Constraints = Constraints()):
        self.grid = grid
        self.shape = grid.shape
        self.axes = grid.axes()
        mesh = np.meshgrid(*self.axes, indexing="ij")
        X = np.stack([m.ravel() for m in mesh], axis=1)
        preds = _predict_all(models, X, c)
        self.components = tuple(v.reshape(self.shape) for v in _normalized(preds, bounds))
        self.feasible = _feasible(preds, c, len(X)).reshape(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def scores(self, w: ObjectiveWeights) -> np.ndarray:
        s = objective(*self.components, w)
        return np.where(self.feasible, s, -np.inf)

    def result(self, idx: tuple[int, ...], score: float, evaluations: int, history=None) -> OptimizationResult:
        return OptimizationResult(
            self.grid.cop_at(idx), float(score), evaluations, bool(self.feasible[idx]),
            tuple(float(c[idx]) for c in self.components), tuple(int(i) for i in idx),
            list(history or []),
        )


def brute_force(models: TrainedModel, grid: SweepGrid, w: ObjectiveWeights, c: Constraints = Constraints(),
                bounds: Mapping[str, NormBounds] | None = None, table: GridObjective | None = None) -> OptimizationResult:
    """Exhaustive argmax over the grid; ties go to the lexicographically smallest COP."""
    table = table or GridObjective(models, grid, bounds, c)
    s = table.scores(w)
    if not np.isfinite(s).any():
        raise NoFeasiblePointError("no grid point satisfies the load constraints")
    flat = int(np.argmax(s))  # first maximum in C order = lexicographic order
    idx = np.unravel_index(flat, table.shape)
    return table.result(idx, s[idx], table.size)


def anneal(score_fn: Callable[[tuple[int, ...]], float], shape: Sequence[int],
           sched: AnnealingSchedule) -> tuple[tuple[int, ...], float, int, list[float]]:
    """Simulated annealing over integer grid indices.

    Moves change one movable coordinate by up to ``neighbor_radius`` steps,
    clamped to the grid. Returns ``(best_index, best_score, evaluations,
    best_history)``; infeasible points score ``-inf`` and are never accepted.
    """
    rng = np.random.default_rng(sched.seed)
    shape = tuple(int(n) for n in shape)
    for _ in range(MAX_START_DRAWS):
        cur = tuple(int(rng.integers(0, n)) for n in shape)
        cur_s = score_fn(cur)
        if math.isfinite(cur_s):
            break
    else:
        raise NoFeasiblePointError(f"no feasible start point in {MAX_START_DRAWS} draws")
    best, best_s = cur, cur_s
    history = [best_s]
    evals = 1
    movable = [d for d, n in enumerate(shape) if n > 1]
    ratio = sched.ratio()
    k = 0
    while evals < sched.budget:
        cand = list(cur)
        if movable:
            d = movable[int(rng.integers(len(movable)))]
            step = int(rng.integers(1, sched.neighbor_radius + 1)) * (1 if rng.random() < 0.5 else -1)
            cand[d] = min(max(cand[d] + step, 0), shape[d] - 1)
        cand = tuple(cand)
        s = score_fn(cand)
        evals += 1
        delta = s - cur_s
        temp = sched.initial_temp * ratio**k
        u = rng.random()
        if delta > 0:
            accept = True
        elif temp > 0:
            accept = math.isfinite(s) and u < math.exp(delta / temp)
        else:
            accept = delta == 0
        if accept:
            cur, cur_s = cand, s
            if s > best_s:
                best, best_s = cand, s
        history.append(best_s)
        k += 1
    return best, best_s, evals, history


def simulated_annealing(models: TrainedModel, grid: SweepGrid, w: ObjectiveWeights,
                        c: Constraints = Constraints(), sched: AnnealingSchedule = AnnealingSchedule(),
                        bounds: Mapping[str, NormBounds] | None = None,
                        table: GridObjective | None = None) -> OptimizationResult:
    table = table or GridObjective(models, grid, bounds, c)
    s = table.scores(w)
    idx, score, evals, hist = anneal(lambda i: float(s[i]), table.shape, sched)
    return table.result(idx, score, evals, hist)


@dataclass(frozen=True)
class ComparisonRow:
    alpha: float
    beta: float
    sa_median: float
    sa_min: float
    sa_max: float
    brute_force: float
    sa_evals: int
    bf_evals: int
    speedup: float


def compare(sa_runs: int, models: TrainedModel, grid: SweepGrid,
            w_list: Sequence[tuple[float, float]] = REFERENCE_WEIGHTS, c: Constraints = Constraints(),
            bounds: Mapping[str, NormBounds] | None = None,
            sched: AnnealingSchedule = AnnealingSchedule(),
            table: GridObjective | None = None) -> list[ComparisonRow]:
    """Brute force once and annealing over ``sa_runs`` seeds, for every weight pair."""
    table = table or GridObjective(models, grid, bounds, c)
    rows = []
    for alpha, beta in w_list:
        w = ObjectiveWeights(alpha, beta)
        bf = brute_force(models, grid, w, c, table=table)
        scores, evals = [], []
        for k in range(sa_runs):
            sa_sched = AnnealingSchedule(
                sched.initial_temp, sched.cooling_ratio, sched.budget, sched.neighbor_radius,
                sched.seed + k, sched.final_temp,
            )
            res = simulated_annealing(models, grid, w, c, sa_sched, table=table)
            scores.append(res.score)
            evals.append(res.evaluations)
        rows.append(ComparisonRow(
            alpha, beta, float(np.median(scores)), float(np.min(scores)), float(np.max(scores)),
            bf.score, int(max(evals)), bf.evaluations, bf.evaluations / sched.budget,
        ))
    return rows


def comparison_to_csv(rows: Sequence[ComparisonRow], meta_line: str | None = None) -> str:
    buf = io.StringIO()
    if meta_line:
        buf.write(meta_line + "\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(COMPARISON_HEADER)
    for r in rows:
        wr.writerow([_num(r.alpha), _num(r.beta), repr(r.sa_median), repr(r.sa_min), repr(r.sa_max),
                     repr(r.brute_force), r.sa_evals, r.bf_evals, repr(r.speedup)])
    return buf.getvalue()


# --- surfaces ------------------------------------------------------------------------


def count_local_maxima(Z) -> int:
    """Cells strictly greater than every existing 8-neighbour.

    NaN cells (no data) are neither candidates nor blocking neighbours.
    """
    Z = np.asarray(Z, dtype=float)
    P = np.pad(np.where(np.isnan(Z), -np.inf, Z), 1, constant_values=-np.inf)
    core = P[1:-1, 1:-1]
    is_max = np.isfinite(core)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            nb = P[1 + di: P.shape[0] - 1 + di, 1 + dj: P.shape[1] - 1 + dj]
            is_max &= core > nb
    return int(is_max.sum())


@dataclass
class SurfaceSlice:
    free: tuple[str, str]
    axes: tuple[tuple[float, ...], tuple[float, ...]]
    values: np.ndarray
    local_maxima: int

    def rows(self):
        for i, a in enumerate(self.axes[0]):
            for j, b in enumerate(self.axes[1]):
                yield a, b, float(self.values[i, j])


def surface_slice(models: TrainedModel, fixed: Mapping[str, float], w: ObjectiveWeights,
                  bounds: Mapping[str, NormBounds], grid: SweepGrid = SweepGrid(),
                  c: Constraints = Constraints()) -> SurfaceSlice:
    """Objective over the two COP fields not in ``fixed``, with its local-maxima count."""
    names = CopVector.field_names()
    unknown = set(fixed) - set(names)
    if unknown:
        raise InputDomainError(f"unknown COP fields {sorted(unknown)}")
    free = [n for n in names if n not in fixed]
    if len(free) != 2:
        raise InputDomainError(f"exactly two free COP fields required, got {free}")
    axes = dict(zip(names, grid.axes()))
    a0, a1 = axes[free[0]], axes[free[1]]
    cops = []
    for v0 in a0:
        for v1 in a1:
            vals = {**fixed, free[0]: v0, free[1]: v1}
            cops.append(CopVector(int(vals["a5_ttt"]), float(vals["a5_th1"]), float(vals["a5_th2"]),
                                  int(vals["a3_ttt"]), float(vals["a3_off"])))
    X = features(cops)
    preds = _predict_all(models, X, c)
    s = objective(*_normalized(preds, bounds), w)
    s = np.where(_feasible(preds, c, len(X)), s, -np.inf).reshape(len(a0), len(a1))
    return SurfaceSlice((free[0], free[1]), (tuple(a0), tuple(a1)), s, count_local_maxima(s))


def argmax_2d(values) -> tuple[int, int]:
    """Index of the largest finite entry; NaN cells are ignored, ties go to the first."""
    v = np.where(np.isnan(values), -np.inf, values)
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(v)), v.shape))
