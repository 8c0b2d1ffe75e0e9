"""Nelder-Mead search for the (alpha0, S) pair minimizing the DE threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .code import DegreeDistributions
from .de import DEFAULT_MAX_ITER, DEFAULT_TARGET_BER, Grid, DEFAULT_GRID, ThresholdNotFound, ThresholdResult, threshold_search
from .decoder import GSVS

ALPHA0_BOUNDS = (0.5, 0.99)
DEFAULT_SIMPLEX = ((0.6, 5.0), (0.8, 5.0), (0.7, 15.0))


# ---------------------------------------------------------------------------
# Hardware-friendly alpha0 values
# ---------------------------------------------------------------------------

def hardware_grid(max_shift: int = 6) -> np.ndarray:
    """alpha0 values with 1 - alpha0 = 2^-i or 2^-j + 2^-k, 1 <= i, j < k <= max_shift."""
    gaps = {2.0 ** -i for i in range(1, max_shift + 1)}
    gaps |= {2.0 ** -j + 2.0 ** -k for j in range(1, max_shift + 1) for k in range(j + 1, max_shift + 1)}
    values = sorted({1.0 - g for g in gaps})
    return np.array([v for v in values if 0.0 < v < 1.0])


HARDWARE_GRID = hardware_grid()


def snap_alpha0(alpha0: float, grid: np.ndarray = HARDWARE_GRID) -> float:
    """Nearest admissible alpha0; ties go to the larger value."""
    dist = np.abs(grid - alpha0)
    best = np.flatnonzero(dist <= dist.min() + 1e-12)
    return float(grid[best[-1]])


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------

@dataclass
class SimplexState:
    vertices: np.ndarray          # (n + 1, n)
    costs: np.ndarray             # (n + 1,)
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    iteration: int = 0

    def sort(self) -> None:
        order = np.argsort(self.costs, kind="stable")
        self.vertices = self.vertices[order]
        self.costs = self.costs[order]

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(max(np.linalg.norm(a - b) for a in v for b in v))

    @property
    def spread(self) -> float:
        finite = self.costs[np.isfinite(self.costs)]
        if finite.size < self.costs.size:
            return math.inf
        return float(self.costs.max() - self.costs.min())


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    evaluations: int
    iterations: int
    best_history: list[float]
    state: SimplexState
    reason: str


class _BudgetExhausted(Exception):
    pass


def nelder_mead(cost: Callable[[np.ndarray], float], initial, tol: float = 1e-3, max_evals: int = 200,
                ftol: float = 0.005, bounds: Sequence[tuple[float, float]] | None = None,
                reflection: float = 1.0, expansion: float = 2.0, contraction: float = 0.5,
                shrink: float = 0.5) -> NelderMeadResult:
    """Minimize ``cost`` from an initial simplex (array of n + 1 vertices or a SimplexState).

    Candidate points are projected onto ``bounds``. Non-finite costs count as
    +inf. Stops when the simplex diameter drops below ``tol``, the cost spread
    below ``ftol``, or ``max_evals`` evaluations have been spent.
    """
    lo = hi = None
    if bounds is not None:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)

    def project(x):
        x = np.asarray(x, dtype=float)
        return x if lo is None else np.clip(x, lo, hi)

    evals = 0

    def f(x) -> float:
        nonlocal evals
        if evals >= max_evals:
            raise _BudgetExhausted
        evals += 1
        val = float(cost(x))
        return val if math.isfinite(val) else math.inf

    if isinstance(initial, SimplexState):
        state = initial
    else:
        verts = np.array([project(v) for v in np.asarray(initial, dtype=float)])
        state = SimplexState(verts, np.full(len(verts), math.inf), reflection, expansion, contraction, shrink)
        try:
            state.costs = np.array([f(v) for v in verts])
        except _BudgetExhausted:
            pass
    state.sort()
    history = [float(state.costs[0])]
    reason = "max_evals"
    try:
        while True:
            if state.diameter < tol:
                reason = "diameter"
                break
            if state.spread < ftol:
                reason = "spread"
                break
            state.iteration += 1
            v, c = state.vertices, state.costs
            centroid = v[:-1].mean(axis=0)
            xr = project(centroid + state.reflection * (centroid - v[-1]))
            fr = f(xr)
            if fr < c[0]:
                xe = project(centroid + state.expansion * (xr - centroid))
                fe = f(xe)
                v[-1], c[-1] = (xe, fe) if fe < fr else (xr, fr)
            elif fr < c[-2]:
                v[-1], c[-1] = xr, fr
            else:
                if fr < c[-1]:
                    xc = project(centroid + state.contraction * (xr - centroid))
                    fc = f(xc)
                    accept = fc <= fr
                else:
                    xc = project(centroid + state.contraction * (v[-1] - centroid))
                    fc = f(xc)
                    accept = fc < c[-1]
                if accept:
                    v[-1], c[-1] = xc, fc
                else:
                    for i in range(1, len(v)):
                        v[i] = project(v[0] + state.shrink * (v[i] - v[0]))
                        c[i] = f(v[i])
            state.sort()
            history.append(float(state.costs[0]))
    except _BudgetExhausted:
        state.sort()
    return NelderMeadResult(state.vertices[0].copy(), float(state.costs[0]), evals, state.iteration, history, state, reason)


# ---------------------------------------------------------------------------
# DE-driven schedule optimization
# ---------------------------------------------------------------------------

@dataclass
class OptimizeConfig:
    modulation: str = "bpsk"
    target_ber: float = DEFAULT_TARGET_BER
    max_iter: int = DEFAULT_MAX_ITER
    rate: float | None = None
    grid: Grid = DEFAULT_GRID
    initial_simplex: Sequence[Sequence[float]] = DEFAULT_SIMPLEX
    tol: float = 1e-2
    ftol: float = 0.005
    max_evals: int = 80
    seed: int | None = None

    def simplex(self) -> np.ndarray:
        if self.seed is None:
            return np.array(self.initial_simplex, dtype=float)
        rng = np.random.default_rng(self.seed)
        return np.column_stack([rng.uniform(*ALPHA0_BOUNDS, 3), rng.uniform(1, self.max_iter, 3)])


class ThresholdCost:
    """Cached (alpha0, S) -> DE threshold in dB, with an evaluation log."""

    def __init__(self, dists: DegreeDistributions, config: OptimizeConfig):
        self.dists = dists
        self.config = config
        self.cache: dict[tuple[float, int], ThresholdResult | None] = {}
        self.log: list[dict] = []

    @staticmethod
    def key(alpha0: float, step: float) -> tuple[float, int]:
        return round(float(alpha0), 4), max(1, int(round(step)))

    def result(self, alpha0: float, step: float, stage: str = "") -> ThresholdResult | None:
        key = self.key(alpha0, step)
        if key not in self.cache:
            cfg = self.config
            try:
                res = threshold_search(self.dists, cfg.modulation, GSVS(key[0], key[1]), cfg.target_ber, cfg.max_iter,
                                       rate=cfg.rate, grid=cfg.grid)
            except ThresholdNotFound:
                res = None
            self.cache[key] = res
            self.log.append({"stage": stage, "alpha0": key[0], "S": key[1],
                             "ebn0_min_db": math.inf if res is None else res.ebn0_min_db})
        return self.cache[key]

    def __call__(self, alpha0: float, step: float, stage: str = "") -> float:
        res = self.result(alpha0, step, stage)
        return math.inf if res is None else res.ebn0_min_db


@dataclass
class OptimizeResult:
    alpha0: float
    step: int
    threshold: ThresholdResult
    continuous: tuple[float, float]
    continuous_cost: float
    nelder_mead: NelderMeadResult
    log: list[dict] = field(repr=False)

    @property
    def ebn0_min_db(self) -> float:
        return self.threshold.ebn0_min_db


def _neighbours(alpha0: float, step: int, grid: np.ndarray, max_step: int, lo: float, hi: float):
    admissible = grid[(grid >= lo - 1e-12) & (grid <= hi + 1e-12)]
    i = int(np.argmin(np.abs(admissible - alpha0)))
    for ai in (i - 1, i, i + 1):
        if not 0 <= ai < admissible.size:
            continue
        for s in (step - 1, step, step + 1):
            if 1 <= s <= max_step:
                yield float(admissible[ai]), s


def optimize_schedule(dists: DegreeDistributions, config: OptimizeConfig = OptimizeConfig(),
                      alpha_grid: np.ndarray = HARDWARE_GRID) -> OptimizeResult:
    """Nelder-Mead over continuous (alpha0, S), then snap and descend over grid neighbours.

    S is rounded to the nearest integer >= 1 inside the cost. After snapping
    the continuous optimum, the 3x3 block of grid-adjacent alpha0 and S +- 1
    is evaluated and the search moves to its best point until the centre is
    best.
    """
    cost = ThresholdCost(dists, config)
    bounds = [ALPHA0_BOUNDS, (1.0, float(config.max_iter))]
    nm = nelder_mead(lambda x: cost(x[0], x[1], "nelder-mead"), config.simplex(), tol=config.tol,
                     max_evals=config.max_evals, ftol=config.ftol, bounds=bounds)
    a_cont, s_cont = float(nm.x[0]), float(nm.x[1])
    lo, hi = ALPHA0_BOUNDS
    admissible = alpha_grid[(alpha_grid >= lo - 1e-12) & (alpha_grid <= hi + 1e-12)]
    best = (snap_alpha0(a_cont, admissible), min(max(1, int(round(s_cont))), config.max_iter))
    best_cost = cost(*best, stage="snap")
    while True:
        moved = False
        for a, s in _neighbours(best[0], best[1], alpha_grid, config.max_iter, lo, hi):
            c = cost(a, s, stage="neighbour")
            if c < best_cost:
                best, best_cost, moved = (a, s), c, True
        if not moved:
            break
    res = cost.result(*best)
    if res is None:
        raise ThresholdNotFound("no admissible (alpha0, S) reached the target BER")
    return OptimizeResult(best[0], best[1], res, (a_cont, s_cont), nm.fun, nm, cost.log)


# ---------------------------------------------------------------------------
# Exhaustive sweep and surface analysis
# ---------------------------------------------------------------------------

@dataclass
class SweepSurface:
    alpha0: np.ndarray
    steps: np.ndarray
    cost: np.ndarray   # (len(alpha0), len(steps)) dB, inf where DE never reaches the target

    def argmins(self, tol: float = 1e-9) -> list[tuple[float, int]]:
        m = np.min(self.cost)
        ii, jj = np.nonzero(self.cost <= m + tol)
        return [(float(self.alpha0[i]), int(self.steps[j])) for i, j in zip(ii, jj)]

    def local_minima(self, tol: float = 1e-9) -> list[list[tuple[int, int]]]:
        """Plateau-aware local minima on the 4-neighbour lattice.

        Cells of equal cost (within ``tol``) that touch form a plateau; a
        plateau is a local minimum when no cell bordering it is lower.
        """
        c = self.cost
        na, ns = c.shape
        seen = np.zeros(c.shape, dtype=bool)
        minima = []
        for i in range(na):
            for j in range(ns):
                if seen[i, j]:
                    continue
                plateau, stack, lower = [], [(i, j)], False
                seen[i, j] = True
                while stack:
                    a, b = stack.pop()
                    plateau.append((a, b))
                    for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        x, y = a + da, b + db
                        if not (0 <= x < na and 0 <= y < ns):
                            continue
                        if abs(c[x, y] - c[a, b]) <= tol or (math.isinf(c[x, y]) and math.isinf(c[a, b])):
                            if not seen[x, y]:
                                seen[x, y] = True
                                stack.append((x, y))
                        elif c[x, y] < c[a, b]:
                            lower = True
                if not lower:
                    minima.append(plateau)
        return minima


def sweep_surface(dists: DegreeDistributions, config: OptimizeConfig = OptimizeConfig(),
                  alpha0_values: Sequence[float] | None = None, steps: Sequence[int] | None = None,
                  cost: ThresholdCost | None = None, progress: Callable[[int, int], None] | None = None) -> SweepSurface:
    """Threshold of GSVS(alpha0, S) over a full grid (defaults: admissible hardware grid x 1..max_iter)."""
    if alpha0_values is None:
        lo, hi = ALPHA0_BOUNDS
        alpha0_values = HARDWARE_GRID[(HARDWARE_GRID >= lo) & (HARDWARE_GRID <= hi)]
    if steps is None:
        steps = range(1, config.max_iter + 1)
    alpha0_values = np.asarray(alpha0_values, dtype=float)
    steps = np.asarray(list(steps), dtype=int)
    cost = cost or ThresholdCost(dists, config)
    out = np.empty((alpha0_values.size, steps.size))
    total = out.size
    for i, a in enumerate(alpha0_values):
        for j, s in enumerate(steps):
            out[i, j] = cost(a, s, stage="sweep")
            if progress:
                progress(i * steps.size + j + 1, total)
    return SweepSurface(alpha0_values, steps, out)


__all__ = [
    "HARDWARE_GRID", "hardware_grid", "snap_alpha0", "SimplexState", "NelderMeadResult", "nelder_mead",
    "OptimizeConfig", "ThresholdCost", "OptimizeResult", "optimize_schedule", "SweepSurface", "sweep_surface",
    "DEFAULT_SIMPLEX", "ALPHA0_BOUNDS",
]
