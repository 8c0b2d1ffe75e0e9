import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from gsvs_ldpc.code import DegreeDistributions
from gsvs_ldpc.optimize import (HARDWARE_GRID, OptimizeConfig, SweepSurface, ThresholdCost, hardware_grid,
                                nelder_mead, optimize_schedule, snap_alpha0, sweep_surface)

REGULAR_36 = DegreeDistributions.from_node_counts({3: 1}, {6: 1})
QUICK = OptimizeConfig(max_iter=12, target_ber=1e-4)


def quadratic(x):
    return (x[0] - 0.7) ** 2 + (x[1] - 10.0) ** 2


def brute_force_grid(max_shift):
    vals = set()
    for i in range(1, max_shift + 1):
        vals.add(1 - 2.0 ** -i)
        for k in range(1, max_shift + 1):
            if k != i:
                vals.add(1 - 2.0 ** -i - 2.0 ** -k)
    return sorted(v for v in vals if 0 < v < 1)


def test_hardware_grid_contents():
    assert HARDWARE_GRID.tolist() == brute_force_grid(6)
    assert np.all(np.diff(HARDWARE_GRID) > 0)
    assert np.all((HARDWARE_GRID > 0) & (HARDWARE_GRID < 1))
    for v in (0.5, 0.625, 0.75, 0.875, 0.9375):
        assert v in HARDWARE_GRID
    assert ((HARDWARE_GRID >= 0.5) & (HARDWARE_GRID <= 0.99)).sum() == 16


def test_snap_examples():
    assert snap_alpha0(0.63) == 0.625
    assert snap_alpha0(0.5) == 0.5
    # with shifts up to 6 the grid holds 1 - (2^-2 + 2^-6) = 0.734375, which is nearer to 0.74 than 0.75
    assert snap_alpha0(0.74) == 0.734375
    assert snap_alpha0(0.74, hardware_grid(5)) == 0.75


def test_snap_ties_go_up():
    grid = np.array([0.5, 0.75])
    assert snap_alpha0(0.625, grid) == 0.75


@given(st.floats(0.01, 0.999))
def test_snap_is_nearest(a):
    s = snap_alpha0(a)
    assert s in HARDWARE_GRID
    assert abs(s - a) <= np.abs(HARDWARE_GRID - a).min() + 1e-12


def test_nelder_mead_quadratic_default_simplex():
    res = nelder_mead(quadratic, [(0.6, 5), (0.8, 5), (0.7, 15)], tol=1e-7, ftol=0.0, max_evals=1000)
    assert np.abs(res.x - [0.7, 10.0]).max() < 1e-4


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0.5, 0.99), st.floats(1, 40)), min_size=3, max_size=3, unique=True))
def test_nelder_mead_quadratic_any_simplex(simplex):
    (a, b), (c, d) = np.array(simplex[1]) - simplex[0], np.array(simplex[2]) - simplex[0]
    assume(abs(a * d - b * c) > 1e-3)   # non-degenerate start
    res = nelder_mead(quadratic, simplex, tol=1e-8, ftol=0.0, max_evals=2000)
    assert np.abs(res.x - [0.7, 10.0]).max() < 1e-4
    assert all(b <= a for a, b in zip(res.best_history, res.best_history[1:]))
    s = res.state
    assert np.all(np.diff(s.costs) >= 0)


@given(st.integers(3, 60))
def test_nelder_mead_budget(budget):
    calls = []

    def f(x):
        calls.append(x)
        return quadratic(x)

    res = nelder_mead(f, [(0.6, 5), (0.8, 5), (0.7, 15)], tol=0.0, ftol=0.0, max_evals=budget)
    assert len(calls) == res.evaluations <= budget
    assert res.reason == "max_evals"


def test_nelder_mead_bounds_projection():
    seen = []

    def f(x):
        seen.append(np.array(x))
        return -x[0] - x[1]     # pushes toward the upper corner

    res = nelder_mead(f, [(0.6, 5), (0.8, 5), (0.7, 15)], max_evals=100, bounds=[(0.5, 0.99), (1, 40)])
    seen = np.array(seen)
    assert seen[:, 0].min() >= 0.5 and seen[:, 0].max() <= 0.99
    assert seen[:, 1].min() >= 1 and seen[:, 1].max() <= 40
    assert res.x == pytest.approx([0.99, 40], abs=1e-3)


def test_nelder_mead_non_finite_cost():
    def f(x):
        return math.nan if x[0] > 0.9 else quadratic(x)

    res = nelder_mead(f, [(0.95, 5), (0.8, 5), (0.7, 15)], tol=1e-7, ftol=0.0, max_evals=1000)
    assert np.abs(res.x - [0.7, 10.0]).max() < 1e-4


def test_threshold_cost_caches_and_rounds():
    cost = ThresholdCost(REGULAR_36, QUICK)
    a = cost(0.75, 3.6)
    assert cost(0.75, 4) == a and cost(0.750001, 4.2) == a
    assert len(cost.log) == 1 and cost.log[0]["S"] == 4


def test_local_minima_detection():
    c = np.array([[3.0, 2.0, 3.0], [2.0, 1.0, 2.0], [3.0, 2.0, 0.5]])
    surf = SweepSurface(np.array([0.5, 0.6, 0.7]), np.array([1, 2, 3]), c)
    assert len(surf.local_minima()) == 2
    flat = SweepSurface(np.array([0.5, 0.6]), np.array([1, 2]), np.array([[1.0, 1.0], [1.0, 2.0]]))
    (plateau,) = flat.local_minima()
    assert sorted(plateau) == [(0, 0), (0, 1), (1, 0)]
    assert sorted(flat.argmins()) == [(0.5, 1), (0.5, 2), (0.6, 1)]


@pytest.fixture(scope="module")
def regular_sweep():
    return sweep_surface(REGULAR_36, QUICK)


def test_optimizer_matches_sweep(regular_sweep):
    res = optimize_schedule(REGULAR_36, QUICK)
    assert res.ebn0_min_db == pytest.approx(regular_sweep.cost.min(), abs=1e-9)
    assert (res.alpha0, res.step) in regular_sweep.argmins()
    assert len(regular_sweep.local_minima()) == 1


def test_optimizer_beats_special_cases(regular_sweep):
    res = optimize_schedule(REGULAR_36, QUICK)
    alphas = regular_sweep.alpha0.tolist()
    best_svs = regular_sweep.cost[alphas.index(0.5)].min()
    # GSVS with S = max_iter never leaves alpha0: the constant-scaling column
    best_const = regular_sweep.cost[:, -1].min()
    assert res.ebn0_min_db <= best_svs and res.ebn0_min_db <= best_const


def test_optimizer_deterministic_and_snap_loss():
    a = optimize_schedule(REGULAR_36, QUICK)
    b = optimize_schedule(REGULAR_36, QUICK)
    assert (a.alpha0, a.step, a.ebn0_min_db) == (b.alpha0, b.step, b.ebn0_min_db)
    assert [r["ebn0_min_db"] for r in a.log] == [r["ebn0_min_db"] for r in b.log]
    assert a.ebn0_min_db - a.continuous_cost < 0.05
    assert a.alpha0 in HARDWARE_GRID and float(a.step).is_integer()


def test_seeded_simplex_is_reproducible():
    cfg = OptimizeConfig(seed=3)
    assert (cfg.simplex() == OptimizeConfig(seed=3).simplex()).all()
    assert not (cfg.simplex() == OptimizeConfig(seed=4).simplex()).all()
    s = cfg.simplex()
    assert s.shape == (3, 2) and s[:, 0].min() >= 0.5 and s[:, 0].max() <= 0.99
