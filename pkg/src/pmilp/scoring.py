"""Ranking unstable ReLUs by how much opening them should tighten a bound.

Every scorer takes a :class:`Target` (a linear row over the pre-activations of
one layer) and returns a :class:`ScoreTable` over unstable neurons of earlier
layers. ``score_sas`` looks at the LP optimum of the target; the others only
look at weights and bounds.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bounds import BoundsMap
from .milp import MilpConfig, MilpModel, SolverError, build_model, solve_milp
from .model import InputRegion, Network, NeuronId
from .simplex import solve_dense

METHODS = ("SAS", "GS_SR", "GS_FSB", "Huang", "Random")


@dataclass(frozen=True)
class Target:
    """The objective ``coeffs . z^layer`` whose bound is being computed."""

    layer: int
    coeffs: np.ndarray
    label: str = ""

    @classmethod
    def neuron(cls, net: Network, nid: NeuronId) -> "Target":
        k, j = nid
        c = np.zeros(net.width(k))
        c[j] = 1.0
        return cls(k, c, f"z[{k},{j}]")

    @classmethod
    def margin(cls, net: Network, j: int, t: int) -> "Target":
        """``z_j - z_t`` on the output layer."""
        L = net.num_layers
        c = np.zeros(net.output_dim)
        c[j] += 1.0
        c[t] -= 1.0
        return cls(L, c, f"z[{L},{j}]-z[{L},{t}]")

    def oriented(self, sense: str) -> np.ndarray:
        return self.coeffs if sense == "max" else -self.coeffs

    def back_weights(self, net: Network, sense: str = "max") -> np.ndarray:
        """Coefficients of the objective over the post-activations feeding ``layer``."""
        return net.weight(self.layer).T @ self.oriented(sense)


@dataclass
class ScoreTable:
    method: str
    target: str
    sense: str
    scores: Dict[NeuronId, float] = field(default_factory=dict)
    seed: Optional[int] = None

    def ranked(self) -> List[Tuple[NeuronId, float]]:
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "layer", "index", "score", "rank"])
        for rank, ((k, j), s) in enumerate(self.ranked(), start=1):
            writer.writerow([self.method, k, j, repr(s), rank])
        return buf.getvalue()


def rate(lb: float, ub: float) -> float:
    """Slope of the upper chord of the ReLU triangle over ``[lb, ub]``."""
    if ub <= 0:
        return 0.0
    if lb >= 0:
        return 1.0
    return ub / (ub - lb)


def rates(lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    up = np.maximum(ub, 0.0)
    width = up - np.minimum(lb, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(width > 0, up / np.where(width > 0, width, 1.0), 0.0)
    r[lb >= 0] = 1.0
    r[ub <= 0] = 0.0
    return r


def _unstable(bounds: BoundsMap, layer: int) -> np.ndarray:
    return np.flatnonzero(bounds.unstable_mask(layer))


def score_gs(net: Network, bounds: BoundsMap, target: Target, variant: str = "FSB",
             sense: str = "max") -> ScoreTable:
    """Backpropagated scores over every layer before the target (SR or FSB bias term)."""
    variant = variant.upper()
    if variant not in ("SR", "FSB"):
        raise ValueError(f"unknown GS variant {variant!r}")
    table = ScoreTable(f"GS_{variant}", target.label, sense)
    lam = target.back_weights(net, sense)
    for k in range(target.layer - 1, 0, -1):
        lb, ub = bounds.pre(k)
        r = rates(lb, ub)
        b = net.bias(k)
        lb_fin = np.where(np.isfinite(lb), lb, 0.0)
        bias_term = lam * b
        clipped = np.maximum(0.0, bias_term) if variant == "SR" else np.minimum(0.0, bias_term)
        s = np.abs(r * lb_fin * np.maximum(lam, 0.0) + clipped - r * bias_term)
        for j in _unstable(bounds, k):
            table.scores[(k, int(j))] = float(s[j])
        if k > 1:
            lam = net.weight(k).T @ (r * lam)
    return table


def score_huang(net: Network, bounds: BoundsMap, target: Target,
                sense: str = "max") -> ScoreTable:
    """``|w| * (UB - LB)`` on the layer right before the target."""
    table = ScoreTable("Huang", target.label, sense)
    k = target.layer - 1
    if k < 1:
        return table
    w = target.back_weights(net)
    lb, ub = bounds.pre(k)
    for j in _unstable(bounds, k):
        table.scores[(k, int(j))] = float(abs(w[j]) * (ub[j] - lb[j]))
    return table


def candidate_pool(bounds: BoundsMap, target: Target) -> List[NeuronId]:
    """Unstable neurons one and two layers before the target."""
    layers = [k for k in (target.layer - 2, target.layer - 1) if k >= 1]
    return bounds.unstable(layers)


def score_random(bounds: BoundsMap, target: Target, seed, sense: str = "max") -> ScoreTable:
    rng = np.random.default_rng(seed)
    pool = candidate_pool(bounds, target)
    table = ScoreTable("Random", target.label, sense,
                       seed=seed if isinstance(seed, int) else None)
    for nid, s in zip(pool, rng.random(len(pool))):
        table.scores[nid] = float(s)
    return table


def lp_solution(net: Network, region: InputRegion, bounds: BoundsMap, target: Target,
                sense: str = "max", model: MilpModel = None):
    """Optimal LP relaxation (no open ReLUs) of the target in the given sense.

    Returns ``(model, primal, value)``; ``value`` is in the target's own sign.
    """
    if model is None:
        model = build_model(net, region, bounds, (), up_to=target.layer)
    obj = model.layer_objective(target.oriented(sense), "max")
    sol = solve_dense(model.dense.with_objective(obj.coeffs, "max"))
    if not sol.optimal:
        raise SolverError(f"LP relaxation for {target.label or 'target'}: {sol.status.value}")
    value = sol.objective_value if sense == "max" else -sol.objective_value
    return model, sol.primal, value


def sas_from_solution(net: Network, bounds: BoundsMap, target: Target, sense: str,
                      model: MilpModel, primal: np.ndarray) -> ScoreTable:
    table = ScoreTable("SAS", target.label, sense)
    n = target.layer
    if n < 2:
        return table
    w = target.back_weights(net, sense)  # over neurons b of layer n-1

    # one layer back: what the relaxation gains over the exact ReLU at sol(b)
    kb = n - 1
    zb = model.values(primal, kb)
    hb = model.values(primal, kb, post=True)
    one_back = np.abs(w * (hb - np.maximum(zb, 0.0)))
    for j in _unstable(bounds, kb):
        table.scores[(kb, int(j))] = float(one_back[j])

    # two layers back: push the change of a-hat through b and its ReLU
    ka = n - 2
    if ka < 1:
        return table
    za = model.values(primal, ka)
    ha = model.values(primal, ka, post=True)
    d_ha = np.maximum(za, 0.0) - ha
    lb_b, ub_b = bounds.pre(kb)
    r_b = rates(lb_b, ub_b)
    w_ab = net.weight(kb)
    pos = w > 0
    neg = w < 0
    for j in _unstable(bounds, ka):
        if d_ha[j] == 0.0:
            table.scores[(ka, int(j))] = 0.0
            continue
        d_b = w_ab[:, j] * d_ha[j]
        d_hb = np.zeros_like(d_b)
        d_hb[pos] = r_b[pos] * d_b[pos]
        up = neg & (zb >= 0)
        d_hb[up] = np.maximum(d_b[up], -zb[up])
        down = neg & (zb < 0)
        d_hb[down] = np.maximum(0.0, d_b[down] + zb[down])
        utility = -float(w @ d_hb)
        table.scores[(ka, int(j))] = max(0.0, utility)
    return table


def score_sas(net: Network, region: InputRegion, bounds: BoundsMap, target: Target,
              sense: str = "max", model: MilpModel = None):
    """Solution-aware scores from one LP solve; returns ``(table, primal)``."""
    model, primal, _ = lp_solution(net, region, bounds, target, sense, model)
    return sas_from_solution(net, bounds, target, sense, model, primal), primal


def improve_oracle(net: Network, region: InputRegion, bounds: BoundsMap, target: Target,
                   nid: NeuronId, sense: str = "max", cfg: MilpConfig = None) -> float:
    """Exact bound gain from opening ``nid`` alone (LP value minus MILP value)."""
    cfg = cfg or MilpConfig(mip_gap=0.0)
    _, _, lp_value = lp_solution(net, region, bounds, target, sense)
    model = build_model(net, region, bounds, [nid], up_to=target.layer)
    res = solve_milp(model, model.layer_objective(target.coeffs, sense), cfg)
    gain = lp_value - res.safe_bound
    return gain if sense == "max" else -gain


def select_open_set(table: ScoreTable, k_min: int, extra: int = 3,
                    threshold: float = 0.01) -> List[NeuronId]:
    """Top ``k_min`` neurons, then up to ``extra`` more while their score beats ``threshold``."""
    if k_min < 0:
        raise ValueError("k_min must be nonnegative")
    ranked = table.ranked()
    chosen = [nid for nid, _ in ranked[:k_min]]
    for nid, s in ranked[k_min:k_min + extra]:
        if s <= threshold:
            break
        chosen.append(nid)
    return chosen


def score(method: str, net: Network, region: InputRegion, bounds: BoundsMap, target: Target,
          sense: str = "max", seed=0, model: MilpModel = None) -> ScoreTable:
    """Dispatch by method name (case-insensitive, as in :data:`METHODS`)."""
    m = method.upper()
    if m == "SAS":
        return score_sas(net, region, bounds, target, sense, model)[0]
    if m in ("GS_FSB", "GS_SR"):
        return score_gs(net, bounds, target, m[3:], sense)
    if m == "HUANG":
        return score_huang(net, bounds, target, sense)
    if m == "RANDOM":
        return score_random(bounds, target, seed, sense)
    raise ValueError(f"unknown scorer {method!r}; expected one of {', '.join(METHODS)}")
