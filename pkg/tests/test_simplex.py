import numpy as np
import pytest
from scipy.optimize import linprog

from pmilp.simplex import (DenseLP, LinearProgram, LpStatus, SimplexConfig, solve, solve_dense,
                           solve_dense_tableau)


def _random_lp(rng, sense):
    n = int(rng.integers(2, 13))
    m = int(rng.integers(1, 12))
    A = rng.normal(size=(m, n)).round(2)
    x0 = rng.uniform(-1, 1, n)
    lo = np.where(rng.random(n) < 0.8, -2.0, -np.inf)
    hi = np.where(rng.random(n) < 0.8, 2.0, np.inf)
    act = A @ x0
    kinds = rng.integers(0, 3, m)  # 0: <=, 1: >=, 2: =
    rlo = np.where(kinds == 0, -np.inf, np.where(kinds == 1, act - rng.random(m), act))
    rhi = np.where(kinds == 1, np.inf, np.where(kinds == 0, act + rng.random(m), act))
    return DenseLP(A, rlo, rhi, lo, hi, rng.normal(size=n), sense)


def _highs(lp: DenseLP):
    A_ub, b_ub = [], []
    for row, l, u in zip(lp.A, lp.row_lo, lp.row_hi):
        if np.isfinite(u):
            A_ub.append(row)
            b_ub.append(u)
        if np.isfinite(l):
            A_ub.append(-row)
            b_ub.append(-l)
    c = lp.cost if lp.sense == "min" else -lp.cost
    bounds = [(None if np.isinf(l) else l, None if np.isinf(u) else u)
              for l, u in zip(lp.col_lo, lp.col_hi)]
    r = linprog(c, A_ub=np.array(A_ub), b_ub=b_ub, bounds=bounds, method="highs")
    if r.status == 3:
        return "unbounded"
    return r.fun if lp.sense == "min" else -r.fun


def test_agrees_with_highs_on_random_lps():
    rng = np.random.default_rng(0)
    for trial in range(150):
        lp = _random_lp(rng, "max" if trial % 2 else "min")
        ours = solve_dense(lp)
        ref = _highs(lp)
        if ref == "unbounded":
            assert ours.status is LpStatus.UNBOUNDED
        else:
            assert ours.status is LpStatus.OPTIMAL
            assert ours.objective_value == pytest.approx(ref, abs=1e-6)
            x = ours.primal
            act = lp.A @ x
            assert np.all(act <= lp.row_hi + 1e-6) and np.all(act >= lp.row_lo - 1e-6)
            assert np.all(x <= lp.col_hi + 1e-7) and np.all(x >= lp.col_lo - 1e-7)


def test_warm_start_matches_cold_after_bound_changes():
    rng = np.random.default_rng(1)
    for _ in range(100):
        lp = _random_lp(rng, "max")
        lp = DenseLP(lp.A, lp.row_lo, lp.row_hi, np.full(lp.A.shape[1], -2.0),
                     np.full(lp.A.shape[1], 2.0), lp.cost, "max")
        sol, tab = solve_dense_tableau(lp)
        lo, hi = lp.col_lo.copy(), lp.col_hi.copy()
        v = int(rng.integers(lp.A.shape[1]))
        hi[v] = lo[v] = float(rng.uniform(-1.5, 1.5))
        changed = DenseLP(lp.A, lp.row_lo, lp.row_hi, lo, hi, lp.cost, "max")
        cold = solve_dense(changed)
        for warm in (solve_dense(changed, warm_start=sol.basis),
                     solve_dense_tableau(changed, warm_start=tab)[0]):
            assert warm.status is cold.status
            if cold.optimal:
                assert warm.objective_value == pytest.approx(cold.objective_value, abs=1e-7)


def test_builder_and_statuses():
    lp = LinearProgram()
    x = lp.add_variable(0.0)
    y = lp.add_variable(0.0)
    lp.add_constraint({x: 1.0, y: 2.0}, "<=", 4.0)
    lp.add_constraint({x: 3.0, y: 1.0}, "<=", 6.0)
    lp.set_objective({x: 1.0, y: 1.0}, "max")
    sol = solve(lp)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective_value == pytest.approx(2.8)

    unb = LinearProgram()
    z = unb.add_variable(0.0)
    unb.set_objective({z: 1.0}, "max")
    assert solve(unb).status is LpStatus.UNBOUNDED

    inf = LinearProgram()
    w = inf.add_variable()
    inf.add_constraint({w: 1.0}, "<=", -1.0)
    inf.set_objective({w: 1.0})
    assert solve(inf).status is LpStatus.INFEASIBLE


def test_degenerate_lp_terminates():
    # many constraints active at the optimum vertex
    lp = LinearProgram()
    xs = [lp.add_variable(0.0, 1.0) for _ in range(4)]
    for i in range(4):
        for j in range(i + 1, 4):
            lp.add_constraint({xs[i]: 1.0, xs[j]: 1.0}, "<=", 1.0)
    lp.add_constraint({x: 1.0 for x in xs}, "<=", 2.0)
    lp.set_objective({x: 1.0 for x in xs}, "max")
    sol = solve(lp)
    assert sol.optimal and sol.objective_value == pytest.approx(2.0)


def test_iteration_limit_reported():
    rng = np.random.default_rng(5)
    lp = _random_lp(rng, "max")
    sol = solve_dense(lp, SimplexConfig(max_iters=0))
    assert sol.status in (LpStatus.ITERATION_LIMIT, LpStatus.OPTIMAL)


def test_bad_relation_rejected():
    lp = LinearProgram()
    x = lp.add_variable()
    with pytest.raises(ValueError):
        lp.add_constraint({x: 1.0}, "<", 1.0)
