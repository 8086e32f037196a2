"""Brute-force ground truth for tiny networks.

Enumerates the activation patterns of the unstable neurons layer by layer.
Inside one pattern the network is affine in the input, so every neuron range
is a pair of small LPs over the input polytope of that pattern. The LPs go to
scipy's HiGHS so this path shares no solver code with :mod:`pmilp.milp`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .bounds import BoundsMap, box_propagate
from .model import InputRegion, Network, RobustnessProperty, forward

MAX_UNSTABLE = 20


class OracleGuardError(RuntimeError):
    pass


@dataclass
class OracleVerdict:
    robust: bool
    witness: Optional[np.ndarray]
    max_margins: np.ndarray  # exact max of z_j - z_t, -inf at j = t


class _Polytope:
    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.bounds = list(zip(lo, hi))
        self.rows: List[np.ndarray] = []
        self.rhs: List[float] = []

    def with_row(self, a: np.ndarray, b: float) -> "_Polytope":
        p = _Polytope.__new__(_Polytope)
        p.bounds = self.bounds
        p.rows = self.rows + [a]
        p.rhs = self.rhs + [b]
        return p

    def _lp(self, c: np.ndarray):
        kw = {}
        if self.rows:
            kw = dict(A_ub=np.array(self.rows), b_ub=np.array(self.rhs))
        return linprog(c, bounds=self.bounds, method="highs", **kw)

    def feasible(self) -> bool:
        return self._lp(np.zeros(len(self.bounds))).status == 0

    def maximize(self, g: np.ndarray, h: float):
        res = self._lp(-g)
        if res.status != 0:
            return None, None
        return float(g @ res.x + h), res.x


def _guard(net: Network, box: BoundsMap, last_layer: int) -> None:
    count = sum(int(box.unstable_mask(k).sum()) for k in range(1, last_layer))
    if count > MAX_UNSTABLE:
        raise OracleGuardError(
            f"{count} unstable neurons exceed the enumeration guard of {MAX_UNSTABLE}"
        )


def _walk(net: Network, region: InputRegion, last_layer: int, visit) -> None:
    """Call ``visit(k, G, h, poly)`` for every reachable pattern of layers < k.

    ``G x + h`` is the pre-activation vector of layer ``k`` on that region.
    """
    box = box_propagate(net, region)
    _guard(net, box, last_layer)
    d0 = net.input_dim

    def layer(k: int, gp: np.ndarray, hp: np.ndarray, poly: _Polytope):
        w, b = net.weight(k), net.bias(k)
        G, h = w @ gp, w @ hp + b
        ranges = visit(k, G, h, poly)
        if k == last_layer:
            return
        lb, ub = box.pre(k)
        free = []
        phase = np.where(lb >= 0, 1.0, 0.0)
        for j in range(G.shape[0]):
            if lb[j] < 0 < ub[j]:
                lo_j, hi_j = ranges[j]
                if hi_j <= 0:
                    phase[j] = 0.0
                elif lo_j >= 0:
                    phase[j] = 1.0
                else:
                    free.append(j)

        def split(i: int, poly: _Polytope, phase: np.ndarray):
            if i == len(free):
                layer(k + 1, G * phase[:, None], h * phase, poly)
                return
            j = free[i]
            for on in (0.0, 1.0):
                # active: -(G_j x + h_j) <= 0 ; inactive: G_j x + h_j <= 0
                sign = -1.0 if on else 1.0
                child = poly.with_row(sign * G[j], -sign * h[j])
                if i == 0 or child.feasible():
                    ph = phase.copy()
                    ph[j] = on
                    split(i + 1, child, ph)

        split(0, poly, phase)

    layer(1, np.eye(d0), np.zeros(d0), _Polytope(region.lower, region.upper))


def exact_bounds(net: Network, region: InputRegion, last_layer: int = None) -> BoundsMap:
    """Exact pre-activation range of every neuron in layers ``1..last_layer``."""
    last_layer = net.num_layers if last_layer is None else last_layer
    lbs = {k: np.full(net.width(k), np.inf) for k in range(1, last_layer + 1)}
    ubs = {k: np.full(net.width(k), -np.inf) for k in range(1, last_layer + 1)}

    def visit(k, G, h, poly):
        ranges = []
        for j in range(G.shape[0]):
            hi_j, _ = poly.maximize(G[j], h[j])
            lo_j, _ = poly.maximize(-G[j], -h[j])
            lo_j = -lo_j
            ubs[k][j] = max(ubs[k][j], hi_j)
            lbs[k][j] = min(lbs[k][j], lo_j)
            ranges.append((lo_j, hi_j))
        return ranges

    _walk(net, region, last_layer, visit)
    out = BoundsMap.for_region(region)
    for k in range(1, last_layer + 1):
        out.set_layer(k, lbs[k], ubs[k])
    return out


def exact_range(net: Network, region: InputRegion, layer: int, coeffs) -> tuple:
    """Exact ``[min, max]`` of ``coeffs . z^layer`` over the region."""
    lo, hi, _, _ = _exact_range_with_points(net, region, layer, np.asarray(coeffs, float))
    return lo, hi


def _exact_range_with_points(net, region, layer, c):
    best = {"lo": np.inf, "hi": -np.inf, "xlo": None, "xhi": None}

    def visit(k, G, h, poly):
        ranges = []
        if k < layer:
            for j in range(G.shape[0]):
                hi_j, _ = poly.maximize(G[j], h[j])
                lo_j, _ = poly.maximize(-G[j], -h[j])
                ranges.append((-lo_j, hi_j))
            return ranges
        g, off = c @ G, float(c @ h)
        hi_v, x_hi = poly.maximize(g, off)
        lo_v, x_lo = poly.maximize(-g, -off)
        if hi_v is not None and hi_v > best["hi"]:
            best["hi"], best["xhi"] = hi_v, x_hi
        if lo_v is not None and -lo_v < best["lo"]:
            best["lo"], best["xlo"] = -lo_v, x_lo
        return ranges

    _walk(net, region, layer, visit)
    return best["lo"], best["hi"], best["xlo"], best["xhi"]


def exact_verify(net: Network, region: InputRegion, prop: RobustnessProperty) -> OracleVerdict:
    prop.check(net)
    t = prop.true_label
    L = net.num_layers
    margins = np.full(net.output_dim, -np.inf)
    witness = None
    for j in range(net.output_dim):
        if j == t:
            continue
        c = np.zeros(net.output_dim)
        c[j], c[t] = 1.0, -1.0
        _, hi, _, x_hi = _exact_range_with_points(net, region, L, c)
        margins[j] = hi
        if witness is None and hi > 0 and x_hi is not None:
            x = region.project(x_hi)
            if np.argmax(forward(net, x).output) != t:
                witness = x
    robust = witness is None and bool(np.all(margins <= 1e-9))
    return OracleVerdict(robust, witness, margins)


def grid_range(net: Network, region: InputRegion, layer: int, coeffs, points: int = 201):
    """Dense-grid estimate of a range; an inner approximation for d0 <= 3."""
    if net.input_dim > 3:
        raise ValueError("grid search only for input dimension <= 3")
    axes = [np.linspace(l, u, points) for l, u in zip(region.lower, region.upper)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, net.input_dim)
    h = mesh.T
    for k in range(1, layer + 1):
        z = net.weight(k) @ h + net.bias(k)[:, None]
        h = np.maximum(z, 0.0)
    vals = np.asarray(coeffs, float) @ z
    return float(vals.min()), float(vals.max())
