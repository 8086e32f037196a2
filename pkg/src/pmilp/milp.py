"""Partial-MILP models of a ReLU network and a branch-and-bound solver for them.

``build_model`` encodes every unstable ReLU in the open set exactly with a
binary indicator (big-M form) and every other unstable ReLU with its triangle
relaxation. ``solve_milp`` branches on the indicators only.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .bounds import BoundsMap
from .model import InputRegion, Network, NeuronId
from .simplex import (DenseLP, LinearProgram, LpSolution, LpStatus, SimplexConfig,
                      solve_dense_tableau)

log = logging.getLogger(__name__)

INT_TOL = 1e-6


class ModelError(ValueError):
    pass


class SolverError(RuntimeError):
    """The relaxation at the root could not be solved (infeasible model or iteration limit)."""


class MilpStatus(enum.Enum):
    PROVEN = "proven"
    GAP_REACHED = "gap_reached"
    TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class Objective:
    coeffs: np.ndarray  # over model variables
    sense: str = "max"
    constant: float = 0.0

    def negated(self) -> "Objective":
        return Objective(-self.coeffs, "min" if self.sense == "max" else "max", -self.constant)


@dataclass
class MilpModel:
    program: LinearProgram
    up_to: int
    x_vars: np.ndarray
    z_vars: Dict[int, np.ndarray]
    zhat_vars: Dict[int, np.ndarray]
    indicators: Dict[NeuronId, int]
    _dense: Optional[DenseLP] = field(default=None, repr=False)

    @property
    def dense(self) -> DenseLP:
        if self._dense is None:
            self._dense = self.program.to_dense()
        return self._dense

    @property
    def num_vars(self) -> int:
        return self.program.num_vars

    @property
    def open_set(self) -> frozenset:
        return frozenset(self.indicators)

    def var(self, nid: NeuronId, post: bool = False) -> int:
        k, j = nid
        return int((self.zhat_vars if post else self.z_vars)[k][j])

    def layer_objective(self, coeffs, sense: str = "max", layer: int = None,
                        constant: float = 0.0) -> Objective:
        """Objective ``coeffs . z^layer`` over pre-activations (default: top layer)."""
        layer = self.up_to if layer is None else layer
        c = np.zeros(self.num_vars)
        c[self.z_vars[layer]] = np.asarray(coeffs, dtype=float)
        return Objective(c, sense, constant)

    def neuron_objective(self, nid: NeuronId, sense: str = "max") -> Objective:
        c = np.zeros(self.num_vars)
        c[self.var(nid)] = 1.0
        return Objective(c, sense)

    def values(self, primal: np.ndarray, layer: int, post: bool = False) -> np.ndarray:
        idx = (self.zhat_vars if post else self.z_vars)[layer]
        return primal[idx]


def build_model(net: Network, region: InputRegion, bounds: BoundsMap,
                open_set: Iterable[NeuronId] = (), up_to: int = None) -> MilpModel:
    """MILP_X over the input box and layers ``1..up_to``.

    Layers below ``up_to`` need bounds and carry ReLU encodings; the top layer
    only gets its (unbounded) pre-activation variables, which objectives refer to.
    """
    up_to = net.num_layers if up_to is None else up_to
    if not 1 <= up_to <= net.num_layers:
        raise ModelError(f"up_to must be in 1..{net.num_layers}, got {up_to}")
    for k in range(1, up_to):
        if not bounds.has(k):
            raise ModelError(f"bounds missing for layer {k}")
    open_set = set(open_set)
    for nid in open_set:
        if not 1 <= nid[0] < up_to:
            raise ModelError(f"open neuron {nid} is not strictly below layer {up_to}")

    lp = LinearProgram()
    lo, hi = region.lower, region.upper
    x_vars = np.array([lp.add_variable(lo[i], hi[i], f"x{i}") for i in range(net.input_dim)],
                      dtype=int)
    z_vars: Dict[int, np.ndarray] = {}
    zhat_vars: Dict[int, np.ndarray] = {}
    indicators: Dict[NeuronId, int] = {}
    prev = x_vars
    for k in range(1, up_to + 1):
        w, b = net.weight(k), net.bias(k)
        top = k == up_to
        if top:
            lb = np.full(w.shape[0], -np.inf)
            ub = np.full(w.shape[0], np.inf)
        else:
            lb, ub = bounds.pre(k)
        zk = np.array([lp.add_variable(lb[j], ub[j], f"z{k}_{j}") for j in range(w.shape[0])],
                      dtype=int)
        for j in range(w.shape[0]):
            nz = np.flatnonzero(w[j])
            lp.add_constraint((np.append(prev[nz], zk[j]), np.append(-w[j, nz], 1.0)),
                              "=", float(b[j]))
        z_vars[k] = zk
        if top:
            break
        hk = np.array([lp.add_variable(max(lb[j], 0.0), max(ub[j], 0.0), f"zh{k}_{j}")
                       for j in range(w.shape[0])], dtype=int)
        for j in range(w.shape[0]):
            l, u = float(lb[j]), float(ub[j])
            z, h = zk[j], hk[j]
            if l >= 0:
                lp.add_constraint(([h, z], [1.0, -1.0]), "=", 0.0)
            elif u <= 0:
                pass  # post-activation variable is fixed to [0, 0]
            elif (k, j) in open_set:
                a = lp.add_variable(0.0, 1.0, f"a{k}_{j}")
                indicators[(k, j)] = a
                lp.add_constraint(([h, z], [1.0, -1.0]), ">=", 0.0)
                lp.add_constraint(([h, a], [1.0, -u]), "<=", 0.0)
                lp.add_constraint(([h, z, a], [1.0, -1.0, -l]), "<=", -l)
            else:
                lp.add_constraint(([h, z], [1.0, -1.0]), ">=", 0.0)
                slope = u / (u - l)
                lp.add_constraint(([h, z], [1.0, -slope]), "<=", -slope * l)
        zhat_vars[k] = hk
        prev = hk
    return MilpModel(lp, up_to, x_vars, z_vars, zhat_vars, indicators)


@dataclass
class MilpConfig:
    mip_gap: float = 1e-3
    timeout_s: float = 60.0
    branch_order: Union[None, str, Sequence[NeuronId]] = None  # None/"most_fractional" or static list
    simplex: SimplexConfig = field(default_factory=SimplexConfig)


@dataclass
class MilpResult:
    safe_bound: float
    incumbent_value: Optional[float]
    incumbent: Optional[np.ndarray]
    gap: float
    status: MilpStatus
    sense: str
    root_bound: float
    root_solution: Optional[LpSolution] = None
    nodes: int = 0
    elapsed_s: float = 0.0


def _gap(bound: float, inc: Optional[float]) -> float:
    if inc is None or not np.isfinite(inc):
        return np.inf
    return abs(bound - inc) / max(1.0, abs(inc))


def _branch_rank(model: MilpModel, order) -> Optional[Dict[int, int]]:
    if order is None or order == "most_fractional":
        return None
    rank: Dict[int, int] = {}
    for nid in order:
        var = model.indicators.get(tuple(nid))
        if var is not None and var not in rank:
            rank[var] = len(rank)
    for nid in sorted(model.indicators):
        rank.setdefault(model.indicators[nid], len(rank))
    return rank


def _pick_branch(values: np.ndarray, ints: np.ndarray, rank) -> Optional[int]:
    frac = np.minimum(np.abs(values), np.abs(1.0 - values))
    fractional = frac > INT_TOL
    if not fractional.any():
        return None
    if rank is None:
        return int(ints[np.argmax(np.where(fractional, frac, -1.0))])
    cands = ints[fractional]
    return int(min(cands, key=rank.__getitem__))


def solve_milp(model: MilpModel, objective: Objective, cfg: MilpConfig = None) -> MilpResult:
    """Branch-and-bound on the ReLU indicators.

    The returned ``safe_bound`` over-approximates the optimum in the objective's
    sense (an upper bound for "max", a lower bound for "min") whatever the stop
    reason.
    """
    cfg = cfg or MilpConfig()
    if objective.sense == "min":
        res = _solve_max(model, objective.negated(), cfg)
        res.safe_bound = -res.safe_bound
        res.root_bound = -res.root_bound
        if res.incumbent_value is not None:
            res.incumbent_value = -res.incumbent_value
        if res.root_solution is not None and res.root_solution.optimal:
            res.root_solution.objective_value = -res.root_solution.objective_value
        res.sense = "min"
        return res
    return _solve_max(model, objective, cfg)


def _solve_max(model: MilpModel, objective: Objective, cfg: MilpConfig) -> MilpResult:
    start = time.perf_counter()
    deadline = start + cfg.timeout_s
    base = model.dense.with_objective(objective.coeffs, "max", objective.constant)
    scfg = cfg.simplex
    ints = np.array(sorted(model.indicators.values()), dtype=int)
    rank = _branch_rank(model, cfg.branch_order)

    root, root_tab = solve_dense_tableau(base, scfg)
    if not root.optimal:
        raise SolverError(f"root relaxation not solved: {root.status.value}")
    root_bound = root.objective_value

    def finish(bound, inc_val, inc_x, status, nodes):
        bound = max(bound, inc_val) if inc_val is not None else bound
        bound = min(bound, root_bound)
        return MilpResult(bound, inc_val, inc_x, _gap(bound, inc_val), status, "max",
                          root_bound, root, nodes, time.perf_counter() - start)

    if ints.size == 0:
        return finish(root_bound, root_bound, root.primal, MilpStatus.PROVEN, 1)

    def bounded(lo_int, hi_int) -> DenseLP:
        col_lo = base.col_lo.copy()
        col_hi = base.col_hi.copy()
        col_lo[ints] = lo_int
        col_hi[ints] = hi_int
        return DenseLP(base.A, base.row_lo, base.row_hi, col_lo, col_hi, base.cost, "max",
                       base.constant)

    inc_val: Optional[float] = None
    inc_x: Optional[np.ndarray] = None

    # incumbent from the ReLU phases of the root relaxation
    nid_of = {v: nid for nid, v in model.indicators.items()}
    phase = np.array([1.0 if root.primal[model.var(nid_of[v])] > 0 else 0.0 for v in ints])
    seed, _ = solve_dense_tableau(bounded(phase, phase), scfg, root_tab)
    if seed.optimal:
        inc_val, inc_x = seed.objective_value, seed.primal

    counter = itertools.count()
    heap: List[Tuple[float, int, np.ndarray, np.ndarray, object]] = []
    nodes = 1
    # the root itself: either integral, or dive from it
    stack_bound = root_bound
    current = (np.zeros(ints.size), np.ones(ints.size), root, root_tab)

    def prune_level() -> float:
        return -np.inf if inc_val is None else inc_val + 1e-9

    while True:
        # dive
        while current is not None:
            lo_i, hi_i, sol, tab = current
            current = None
            value = min(sol.objective_value, stack_bound)
            if value <= prune_level():
                break
            j = _pick_branch(sol.primal[ints], ints, rank)
            if j is None:
                inc_val, inc_x = value, sol.primal
                break
            pos = int(np.searchsorted(ints, j))
            down_hi = hi_i.copy()
            down_hi[pos] = 0.0
            up_lo = lo_i.copy()
            up_lo[pos] = 1.0
            children = [(lo_i, down_hi), (up_lo, hi_i)]
            if sol.primal[j] >= 0.5:
                children.reverse()
            (dl, dh), (ol, oh) = children
            heapq.heappush(heap, (-value, next(counter), ol, oh, sol.basis))
            if time.perf_counter() > deadline:
                heapq.heappush(heap, (-value, next(counter), dl, dh, sol.basis))
                break
            child, child_tab = solve_dense_tableau(bounded(dl, dh), scfg, tab)
            nodes += 1
            if child.status is LpStatus.OPTIMAL:
                stack_bound = value
                current = (dl, dh, child, child_tab)
            elif child.status is not LpStatus.INFEASIBLE:
                # unresolved node: keep its parent bound in the open set
                heapq.heappush(heap, (-value, next(counter), dl, dh, None))
                log.warning("node relaxation ended with %s", child.status.value)
                break

        # discard dominated open nodes
        while heap and -heap[0][0] <= prune_level():
            heapq.heappop(heap)
        if not heap:
            if inc_val is None:
                raise SolverError("no integer-feasible point: model infeasible")
            return finish(inc_val, inc_val, inc_x, MilpStatus.PROVEN, nodes)
        best_open = -heap[0][0]
        if inc_val is not None and _gap(max(best_open, inc_val), inc_val) <= cfg.mip_gap:
            return finish(best_open, inc_val, inc_x, MilpStatus.GAP_REACHED, nodes)
        if time.perf_counter() > deadline:
            return finish(best_open, inc_val, inc_x, MilpStatus.TIMED_OUT, nodes)
        neg, _, lo_i, hi_i, basis = heapq.heappop(heap)
        sol, tab = solve_dense_tableau(bounded(lo_i, hi_i), scfg, basis)
        nodes += 1
        if sol.status is LpStatus.INFEASIBLE:
            continue
        if not sol.optimal:
            # cannot refine this subtree; its bound stays valid as a final answer
            log.warning("open node relaxation ended with %s", sol.status.value)
            heapq.heappush(heap, (neg, next(counter), lo_i, hi_i, None))
            best_open = -heap[0][0]
            return finish(best_open, inc_val, inc_x, MilpStatus.TIMED_OUT, nodes)
        stack_bound = -neg
        current = (lo_i, hi_i, sol, tab)
