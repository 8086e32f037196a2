"""Dense bounded-variable simplex.

Every constraint row ``i`` is turned into a logical variable ``r_i = A_i x``
boxed by ``[row_lo_i, row_hi_i]``, so the working system is ``A x - r = 0``
with simple bounds on all columns. Cold starts run a two-phase primal simplex
(artificials for rows violated by the starting point). Warm starts from a
stored basis, as used by branch-and-bound after tightening variable bounds,
run the dual simplex and then polish with primal phase 2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

INF = np.inf


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class SimplexConfig:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    max_iters: Optional[int] = None  # default 50 * (vars + constraints)
    bland_after: int = 20
    pivot_tol: float = 1e-9
    refactor_every: int = 100


@dataclass(frozen=True)
class Basis:
    """Basic column per row plus which nonbasic columns sit at their upper bound."""

    head: np.ndarray
    at_upper: np.ndarray


@dataclass
class LpSolution:
    status: LpStatus
    objective_value: float
    primal: np.ndarray
    iterations: int = 0
    basis: Optional[Basis] = None

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


Coeffs = Union[Dict[int, float], Tuple[Sequence[int], Sequence[float]]]

_RELATIONS = ("<=", ">=", "=")


class LinearProgram:
    """LP with box-bounded variables, sparse rows and a linear objective."""

    def __init__(self):
        self.lower: List[float] = []
        self.upper: List[float] = []
        self.names: List[Optional[str]] = []
        self.rows: List[Tuple[np.ndarray, np.ndarray, str, float]] = []
        self.objective = np.zeros(0)
        self.objective_constant = 0.0
        self.sense = "max"

    @property
    def num_vars(self) -> int:
        return len(self.lower)

    @property
    def num_constraints(self) -> int:
        return len(self.rows)

    def add_variable(self, lower: float = 0.0, upper: float = INF, name: str = None) -> int:
        if lower > upper:
            raise ValueError(f"variable {name!r}: lower {lower} > upper {upper}")
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.names.append(name)
        return len(self.lower) - 1

    def add_constraint(self, coeffs: Coeffs, relation: str, rhs: float) -> int:
        if relation not in _RELATIONS:
            raise ValueError(f"relation must be one of {_RELATIONS}, got {relation!r}")
        if not np.isfinite(rhs):
            raise ValueError("constraint right-hand side must be finite")
        idx, val = _split(coeffs)
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_vars):
            raise ValueError("constraint references an undeclared variable")
        self.rows.append((idx, val, relation, float(rhs)))
        return len(self.rows) - 1

    def set_objective(self, coeffs: Coeffs, sense: str = "max", constant: float = 0.0) -> None:
        if sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {sense!r}")
        idx, val = _split(coeffs)
        c = np.zeros(self.num_vars)
        np.add.at(c, idx, val)
        self.objective = c
        self.objective_constant = float(constant)
        self.sense = sense

    def to_dense(self) -> "DenseLP":
        n, m = self.num_vars, self.num_constraints
        A = np.zeros((m, n))
        row_lo = np.full(m, -INF)
        row_hi = np.full(m, INF)
        for i, (idx, val, rel, rhs) in enumerate(self.rows):
            np.add.at(A[i], idx, val)
            if rel in ("<=", "="):
                row_hi[i] = rhs
            if rel in (">=", "="):
                row_lo[i] = rhs
        c = np.zeros(n)
        c[: self.objective.size] = self.objective
        return DenseLP(A, row_lo, row_hi, np.array(self.lower), np.array(self.upper), c,
                       self.sense, self.objective_constant)


def _split(coeffs: Coeffs):
    if isinstance(coeffs, dict):
        idx = np.fromiter(coeffs.keys(), dtype=int, count=len(coeffs))
        val = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
    else:
        idx = np.asarray(coeffs[0], dtype=int)
        val = np.asarray(coeffs[1], dtype=float)
    return idx, val


@dataclass
class DenseLP:
    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    col_lo: np.ndarray
    col_hi: np.ndarray
    cost: np.ndarray
    sense: str = "max"
    constant: float = 0.0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.A.shape

    def with_objective(self, cost: np.ndarray, sense: str, constant: float = 0.0) -> "DenseLP":
        return DenseLP(self.A, self.row_lo, self.row_hi, self.col_lo, self.col_hi,
                       np.asarray(cost, dtype=float), sense, constant)


class _Tableau:
    """Full tableau ``T = B^-1 [A, -I, S]`` with column values ``x``."""

    def __init__(self, lp: DenseLP, cfg: SimplexConfig):
        self.lp = lp
        self.cfg = cfg
        m, n = lp.A.shape
        self.m, self.n = m, n
        self.lo = np.concatenate([lp.col_lo, lp.row_lo])
        self.hi = np.concatenate([lp.col_hi, lp.row_hi])
        cost = lp.cost if lp.sense == "min" else -lp.cost
        self.cost = np.concatenate([cost, np.zeros(m)])
        self.M: np.ndarray = np.hstack([lp.A, -np.eye(m)])
        self.T: np.ndarray = None
        self.head: np.ndarray = None
        self.x: np.ndarray = None
        self.allowed: np.ndarray = None
        self.iterations = 0
        self.since_refactor = 0

    def clone(self) -> "_Tableau":
        other = object.__new__(_Tableau)
        other.__dict__.update(self.__dict__)
        other.lo, other.hi = self.lo.copy(), self.hi.copy()
        other.T, other.head, other.x = self.T.copy(), self.head.copy(), self.x.copy()
        other.allowed = self.allowed.copy()
        other.iterations = 0
        return other

    @property
    def N(self) -> int:
        return self.T.shape[1]

    def basis(self) -> Basis:
        nb = np.ones(self.N, dtype=bool)
        nb[self.head] = False
        at_upper = nb & (self.x == self.hi) & (self.lo < self.hi)
        return Basis(self.head.copy(), at_upper[: self.n + self.m].copy())

    def recompute_basics(self) -> None:
        xn = self.x.copy()
        xn[self.head] = 0.0
        self.x[self.head] = -(self.T @ xn)

    def refactor(self) -> bool:
        B = self.M[:, self.head]
        try:
            self.T = np.linalg.solve(B, self.M)
        except np.linalg.LinAlgError:
            return False
        self.T[:, self.head] = np.eye(self.m)
        self.since_refactor = 0
        self.recompute_basics()
        return True

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.head[r] = j
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= self.cfg.refactor_every:
            self.refactor()

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        d = cost - cost[self.head] @ self.T
        d[self.head] = 0.0
        return d

    def primal_infeasibility(self) -> np.ndarray:
        xb = self.x[self.head]
        return np.maximum(np.maximum(self.lo[self.head] - xb, xb - self.hi[self.head]), 0.0)

    # -- starts ---------------------------------------------------------------

    def cold_start(self) -> int:
        """Slack basis; returns the number of artificial columns added."""
        lp, m, n = self.lp, self.m, self.n
        xs = np.where(np.isfinite(lp.col_lo), lp.col_lo,
                      np.where(np.isfinite(lp.col_hi), lp.col_hi, 0.0))
        act = lp.A @ xs
        tol = self.cfg.feas_tol
        below = act < lp.row_lo - tol
        above = act > lp.row_hi + tol
        bad = np.flatnonzero(below | above)
        target = np.where(below, lp.row_lo, lp.row_hi)
        sign = np.sign(target - act)
        S = np.zeros((m, bad.size))
        S[bad, np.arange(bad.size)] = sign[bad]
        self.M = np.hstack([lp.A, -np.eye(m), S])
        self.lo = np.concatenate([lp.col_lo, lp.row_lo, np.zeros(bad.size)])
        self.hi = np.concatenate([lp.col_hi, lp.row_hi, np.full(bad.size, INF)])
        self.cost = np.concatenate([self.cost[: n + m], np.zeros(bad.size)])
        self.x = np.concatenate([xs, act, np.zeros(bad.size)])
        self.head = np.arange(n, n + m)
        self.head[bad] = n + m + np.arange(bad.size)
        self.x[n + bad] = target[bad]
        diag = -np.ones(m)
        diag[bad] = sign[bad]
        self.T = self.M / diag[:, None]
        self.allowed = np.ones(self.M.shape[1], dtype=bool)
        self.recompute_basics()
        return bad.size

    def warm_start(self, basis: Basis) -> bool:
        m, n = self.m, self.n
        self.head = basis.head.copy()
        self.allowed = np.ones(n + m, dtype=bool)
        lo, hi = self.lo, self.hi
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        up = basis.at_upper & np.isfinite(hi)
        x[up] = hi[up]
        self.x = x
        return self.refactor()

    def drop_artificials(self) -> bool:
        """Pivot basic artificials out, then delete artificial columns."""
        base = self.n + self.m
        cols = self.T.shape[1]
        if cols == base:
            return True
        for r in range(self.m):
            if self.head[r] < base:
                continue
            row = np.abs(self.T[r, :base])
            row[self.head[self.head < base]] = 0.0
            j = int(np.argmax(row))
            if row[j] <= self.cfg.pivot_tol:
                return False
            self.pivot(r, j)
            self.recompute_basics()
        self.T = self.T[:, :base]
        self.M = self.M[:, :base]
        self.x = self.x[:base]
        self.lo, self.hi = self.lo[:base], self.hi[:base]
        self.cost = self.cost[:base]
        self.allowed = self.allowed[:base]
        return True

    # -- iterations -----------------------------------------------------------

    def primal(self, cost: np.ndarray, max_iters: int) -> LpStatus:
        cfg = self.cfg
        streak = 0
        while True:
            if self.iterations >= max_iters:
                return LpStatus.ITERATION_LIMIT
            d = self.reduced_costs(cost)
            nonbasic = np.ones(self.N, dtype=bool)
            nonbasic[self.head] = False
            nonbasic &= self.allowed
            can_inc = nonbasic & (self.x < self.hi) & (d < -cfg.opt_tol)
            can_dec = nonbasic & (self.x > self.lo) & (d > cfg.opt_tol)
            cand = can_inc | can_dec
            if not cand.any():
                return LpStatus.OPTIMAL
            if streak >= cfg.bland_after:
                j = int(np.flatnonzero(cand)[0])
            else:
                j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            delta = 1.0 if can_inc[j] else -1.0
            col = delta * self.T[:, j]
            xb = self.x[self.head]
            lob, hib = self.lo[self.head], self.hi[self.head]
            ratios = np.full(self.m, INF)
            dn = col > cfg.pivot_tol
            up = col < -cfg.pivot_tol
            ratios[dn] = (xb[dn] - lob[dn]) / col[dn]
            ratios[up] = (hib[up] - xb[up]) / (-col[up])
            ratios = np.maximum(ratios, 0.0)
            t_row = ratios.min() if self.m else INF
            t_flip = self.hi[j] - self.lo[j]
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return LpStatus.UNBOUNDED
            if t_flip <= t_row:
                self.x[j] = self.hi[j] if delta > 0 else self.lo[j]
                self.iterations += 1
                self.recompute_basics()
                streak = 0 if t_flip > 1e-12 else streak + 1
                continue
            ties = np.flatnonzero(ratios <= t_row + 1e-12)
            r = int(ties[np.argmin(self.head[ties])])
            leaving = self.head[r]
            bound = self.lo[leaving] if col[r] > 0 else self.hi[leaving]
            self.x[j] += delta * t_row
            self.pivot(r, j)
            self.x[leaving] = bound
            self.recompute_basics()
            streak = streak + 1 if t_row <= 1e-12 else 0

    def dual_feasible(self, cost: np.ndarray) -> bool:
        tol = 1e-7
        d = self.reduced_costs(cost)
        nonbasic = np.ones(self.N, dtype=bool)
        nonbasic[self.head] = False
        movable_up = nonbasic & (self.x < self.hi)
        movable_dn = nonbasic & (self.x > self.lo)
        return not (np.any(movable_up & (d < -tol)) or np.any(movable_dn & (d > tol)))

    def dual(self, cost: np.ndarray, max_iters: int) -> LpStatus:
        cfg = self.cfg
        while True:
            infeas = self.primal_infeasibility()
            r = int(np.argmax(infeas)) if self.m else 0
            if not self.m or infeas[r] <= cfg.feas_tol:
                return LpStatus.OPTIMAL
            if self.iterations >= max_iters:
                return LpStatus.ITERATION_LIMIT
            d = self.reduced_costs(cost)
            leaving = self.head[r]
            xr = self.x[leaving]
            to_lower = xr < self.lo[leaving]
            target = self.lo[leaving] if to_lower else self.hi[leaving]
            alpha = self.T[r]
            nonbasic = np.ones(self.N, dtype=bool)
            nonbasic[self.head] = False
            inc = nonbasic & (self.x < self.hi)
            dec = nonbasic & (self.x > self.lo)
            neg = alpha < -cfg.pivot_tol
            pos = alpha > cfg.pivot_tol
            if to_lower:
                cand = (neg & inc) | (pos & dec)
            else:
                cand = (pos & inc) | (neg & dec)
            if not cand.any():
                return LpStatus.INFEASIBLE
            ratio = np.full(self.N, INF)
            ratio[cand] = np.abs(d[cand]) / np.abs(alpha[cand])
            j = int(np.argmin(ratio))
            self.x[j] += (xr - target) / alpha[j]
            self.pivot(r, j)
            self.x[leaving] = target
            self.recompute_basics()


def _max_iters(lp: DenseLP, cfg: SimplexConfig) -> int:
    m, n = lp.A.shape
    return cfg.max_iters if cfg.max_iters is not None else 50 * (n + m)


def _finish(tab: _Tableau, status: LpStatus) -> LpSolution:
    lp = tab.lp
    n = tab.n
    if status is LpStatus.OPTIMAL:
        tab.refactor()
        primal = tab.x[:n].copy()
        # basic structurals may sit a hair outside their box after refactoring
        primal = np.clip(primal, lp.col_lo, lp.col_hi)
        value = float(lp.cost @ primal) + lp.constant
        return LpSolution(status, value, primal, tab.iterations, tab.basis())
    nan = float("nan")
    if status is LpStatus.UNBOUNDED:
        nan = INF if lp.sense == "max" else -INF
    return LpSolution(status, nan, tab.x[:n].copy() if tab.x is not None else np.zeros(n),
                      tab.iterations)


def _trivially_infeasible(lp: DenseLP) -> bool:
    return bool(np.any(lp.col_lo > lp.col_hi) or np.any(lp.row_lo > lp.row_hi))


def _solve_cold(lp: DenseLP, cfg: SimplexConfig) -> Tuple[LpSolution, Optional[_Tableau]]:
    tab = _Tableau(lp, cfg)
    if _trivially_infeasible(lp):
        return LpSolution(LpStatus.INFEASIBLE, float("nan"), np.zeros(lp.A.shape[1])), None
    limit = _max_iters(lp, cfg)
    n_art = tab.cold_start()
    if n_art:
        phase1 = np.zeros(tab.N)
        phase1[tab.n + tab.m:] = 1.0
        status = tab.primal(phase1, limit)
        if status is LpStatus.ITERATION_LIMIT:
            return _finish(tab, status), None
        residual = float(tab.x[tab.n + tab.m:].sum())
        if residual > cfg.feas_tol:
            return _finish(tab, LpStatus.INFEASIBLE), None
        if not tab.drop_artificials():
            return _finish(tab, LpStatus.INFEASIBLE), None
    status = tab.primal(tab.cost, limit)
    return _finish(tab, status), tab


def _resume(tab: _Tableau) -> Tuple[LpSolution, Optional[_Tableau]]:
    limit = tab.iterations + _max_iters(tab.lp, tab.cfg)
    if tab.primal_infeasibility().max(initial=0.0) > tab.cfg.feas_tol:
        if not tab.dual_feasible(tab.cost):
            return None, None
        status = tab.dual(tab.cost, limit)
        if status is not LpStatus.OPTIMAL:
            return _finish(tab, status), None
    status = tab.primal(tab.cost, limit)
    return _finish(tab, status), tab


def solve_dense(lp: DenseLP, cfg: SimplexConfig = SimplexConfig(),
                warm_start: Optional[Basis] = None) -> LpSolution:
    sol, _ = solve_dense_tableau(lp, cfg, warm_start)
    return sol


def solve_dense_tableau(lp: DenseLP, cfg: SimplexConfig = SimplexConfig(),
                        warm_start=None) -> Tuple[LpSolution, Optional[_Tableau]]:
    """Solve and also return the final tableau (for chaining warm starts).

    ``warm_start`` may be a :class:`Basis` or a tableau returned by a previous
    call on an LP that differs only in column bounds.
    """
    if warm_start is not None and not _trivially_infeasible(lp):
        if isinstance(warm_start, _Tableau):
            tab = warm_start.clone()
            tab.lp = lp
            tab.lo = np.concatenate([lp.col_lo, lp.row_lo])
            tab.hi = np.concatenate([lp.col_hi, lp.row_hi])
            nonbasic = np.ones(tab.N, dtype=bool)
            nonbasic[tab.head] = False
            x = tab.x
            # nonbasic columns must sit on a bound of the new box
            on_bound = (x == tab.lo) | (x == tab.hi)
            free = ~np.isfinite(tab.lo) & ~np.isfinite(tab.hi)
            snap = nonbasic & ~free & (~on_bound | (x < tab.lo) | (x > tab.hi))
            x[snap] = np.where(x[snap] > tab.hi[snap], tab.hi[snap],
                               np.where(np.isfinite(tab.lo[snap]), tab.lo[snap], tab.hi[snap]))
            tab.recompute_basics()
            ok = True
        else:
            tab = _Tableau(lp, cfg)
            ok = tab.warm_start(warm_start)
        if ok:
            sol, out = _resume(tab)
            if sol is not None and sol.status is not LpStatus.ITERATION_LIMIT:
                return sol, out
    return _solve_cold(lp, cfg)


def solve(lp: LinearProgram, cfg: SimplexConfig = SimplexConfig(),
          warm_start: Optional[Basis] = None) -> LpSolution:
    """Solve ``lp``; infeasibility, unboundedness and iteration limits are statuses."""
    return solve_dense(lp.to_dense(), cfg, warm_start)
