"""Interval (box) abstraction and per-neuron pre-activation bounds."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Tuple

import numpy as np

from .model import InputRegion, Network, NeuronId


class NeuronStatus(enum.Enum):
    STABLE_POSITIVE = "stable+"
    STABLE_NEGATIVE = "stable-"
    UNSTABLE = "unstable"


def status_of(lb: float, ub: float) -> NeuronStatus:
    if lb >= 0:
        return NeuronStatus.STABLE_POSITIVE
    if ub <= 0:
        return NeuronStatus.STABLE_NEGATIVE
    return NeuronStatus.UNSTABLE


@dataclass
class BoundsMap:
    """Pre-activation bounds ``lb[k], ub[k]`` for layers ``1..computed``.

    Post-activation bounds are always derived, never stored.
    """

    input_lb: np.ndarray
    input_ub: np.ndarray
    lb: Dict[int, np.ndarray] = field(default_factory=dict)
    ub: Dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_region(cls, region: InputRegion) -> "BoundsMap":
        return cls(region.lower.copy(), region.upper.copy())

    @property
    def layers(self) -> List[int]:
        return sorted(self.lb)

    @property
    def last_layer(self) -> int:
        return max(self.lb) if self.lb else 0

    def set_layer(self, layer: int, lb, ub) -> None:
        lb = np.asarray(lb, dtype=float).copy()
        ub = np.asarray(ub, dtype=float).copy()
        if lb.shape != ub.shape:
            raise ValueError("lb/ub shapes differ")
        if np.any(lb > ub):
            bad = int(np.argmax(lb > ub))
            raise ValueError(f"layer {layer} neuron {bad}: LB {lb[bad]} > UB {ub[bad]}")
        self.lb[layer] = lb
        self.ub[layer] = ub

    def has(self, layer: int) -> bool:
        return layer == 0 or layer in self.lb

    def pre(self, layer: int) -> Tuple[np.ndarray, np.ndarray]:
        if layer == 0:
            return self.input_lb, self.input_ub
        if layer not in self.lb:
            raise KeyError(f"no bounds for layer {layer}")
        return self.lb[layer], self.ub[layer]

    def post(self, layer: int) -> Tuple[np.ndarray, np.ndarray]:
        """Bounds of the values fed into layer ``layer + 1``."""
        if layer == 0:
            return self.input_lb, self.input_ub
        lb, ub = self.pre(layer)
        return np.maximum(lb, 0.0), np.maximum(ub, 0.0)

    def neuron(self, nid: NeuronId) -> Tuple[float, float]:
        k, j = nid
        return float(self.lb[k][j]), float(self.ub[k][j])

    def status(self, nid: NeuronId) -> NeuronStatus:
        return status_of(*self.neuron(nid))

    def unstable_mask(self, layer: int) -> np.ndarray:
        lb, ub = self.pre(layer)
        return (lb < 0) & (ub > 0)

    def unstable(self, layers=None) -> List[NeuronId]:
        layers = self.layers if layers is None else layers
        out = []
        for k in layers:
            out.extend((k, int(j)) for j in np.flatnonzero(self.unstable_mask(k)))
        return out

    def copy(self) -> "BoundsMap":
        return BoundsMap(
            self.input_lb.copy(), self.input_ub.copy(),
            {k: v.copy() for k, v in self.lb.items()},
            {k: v.copy() for k, v in self.ub.items()},
        )

    def truncated(self, last: int) -> "BoundsMap":
        out = BoundsMap(self.input_lb.copy(), self.input_ub.copy())
        for k in self.layers:
            if k <= last:
                out.set_layer(k, self.lb[k], self.ub[k])
        return out

    def iter_neurons(self) -> Iterator[Tuple[NeuronId, float, float]]:
        for k in self.layers:
            for j, (l, u) in enumerate(zip(self.lb[k], self.ub[k])):
                yield (k, j), float(l), float(u)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "index", "LB", "UB", "status"])
        for (k, j), l, u in self.iter_neurons():
            writer.writerow([k, j, repr(l), repr(u), status_of(l, u).value])
        return buf.getvalue()


def affine_interval(w: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Exact range of ``w @ x + b`` over the box ``[lo, hi]``."""
    wp = np.maximum(w, 0.0)
    wn = np.minimum(w, 0.0)
    return wp @ lo + wn @ hi + b, wp @ hi + wn @ lo + b


def box_layer(net: Network, bounds: BoundsMap, layer: int):
    lo, hi = bounds.post(layer - 1)
    return affine_interval(net.weight(layer), net.bias(layer), lo, hi)


def box_propagate(net: Network, region: InputRegion) -> BoundsMap:
    if region.center.shape[0] != net.input_dim:
        raise ValueError(
            f"region has dimension {region.center.shape[0]}, network expects {net.input_dim}"
        )
    bounds = BoundsMap.for_region(region)
    for k in range(1, net.num_layers + 1):
        bounds.set_layer(k, *box_layer(net, bounds, k))
    return bounds


def average_uncertainty(bounds: BoundsMap, layer: int) -> float:
    lb, ub = bounds.pre(layer)
    return float(np.mean(ub - lb))


def intersect(a: BoundsMap, b: BoundsMap) -> BoundsMap:
    """Layerwise intersection on the layers both maps carry."""
    out = a.copy()
    for k in a.layers:
        if k in b.lb:
            lb = np.maximum(a.lb[k], b.lb[k])
            ub = np.minimum(a.ub[k], b.ub[k])
            # crossing by round-off only; keep a valid interval
            ub = np.maximum(ub, lb)
            out.set_layer(k, lb, ub)
    return out
