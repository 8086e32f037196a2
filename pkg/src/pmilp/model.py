"""Dense feed-forward ReLU networks, robustness properties and concrete evaluation.

Layers are numbered the usual way: layer 0 is the input, layers ``1..L`` are
affine maps, a ReLU follows every layer except the last. A neuron is addressed
as ``(layer, index)`` with ``layer >= 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

NeuronId = Tuple[int, int]


class NetworkFormatError(ValueError):
    """Raised when a network or property file cannot be turned into a valid object."""


@dataclass(frozen=True)
class AffineLayer:
    weights: np.ndarray  # (d_out, d_in), row r = incoming weights of neuron r
    bias: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Network:
    layers: Tuple[AffineLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 2:
            raise NetworkFormatError(
                f"network needs at least one hidden layer, got {len(layers)} affine layer(s)"
            )
        for i, layer in enumerate(layers, start=1):
            w, b = layer.weights, layer.bias
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise NetworkFormatError(
                    f"layer {i}: weights {w.shape} and bias {b.shape} do not match"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NetworkFormatError(f"layer {i}: non-finite weight or bias")
            if i > 1 and w.shape[1] != layers[i - 2].out_dim:
                raise NetworkFormatError(
                    f"layer {i}: expects input of size {w.shape[1]} but layer {i - 1} "
                    f"outputs {layers[i - 2].out_dim}"
                )

    @classmethod
    def from_arrays(cls, weights: Sequence, biases: Sequence) -> "Network":
        layers = [
            AffineLayer(np.asarray(w, dtype=float), np.asarray(b, dtype=float))
            for w, b in zip(weights, biases)
        ]
        if len(weights) != len(biases):
            raise NetworkFormatError("number of weight matrices and bias vectors differ")
        return cls(tuple(layers))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def width(self, layer: int) -> int:
        return self.input_dim if layer == 0 else self.layers[layer - 1].out_dim

    def weight(self, layer: int) -> np.ndarray:
        return self.layers[layer - 1].weights

    def bias(self, layer: int) -> np.ndarray:
        return self.layers[layer - 1].bias

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
                for layer in self.layers
            ]
        }


@dataclass(frozen=True)
class InputRegion:
    """L-infinity ball around ``center`` clamped to ``[clip_lo, clip_hi]``."""

    center: np.ndarray
    epsilon: float
    clip_lo: Optional[np.ndarray] = None
    clip_hi: Optional[np.ndarray] = None

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", center)
        if self.epsilon < 0 or not np.isfinite(self.epsilon):
            raise ValueError(f"epsilon must be finite and nonnegative, got {self.epsilon}")
        n = center.shape[0]
        lo = np.full(n, -np.inf) if self.clip_lo is None else np.broadcast_to(
            np.asarray(self.clip_lo, dtype=float), (n,)).copy()
        hi = np.full(n, np.inf) if self.clip_hi is None else np.broadcast_to(
            np.asarray(self.clip_hi, dtype=float), (n,)).copy()
        object.__setattr__(self, "clip_lo", lo)
        object.__setattr__(self, "clip_hi", hi)
        if np.any(self.lower > self.upper):
            raise ValueError("clip range does not intersect the epsilon ball")

    @property
    def lower(self) -> np.ndarray:
        return np.maximum(self.center - self.epsilon, self.clip_lo)

    @property
    def upper(self) -> np.ndarray:
        return np.minimum(self.center + self.epsilon, self.clip_hi)

    def with_epsilon(self, epsilon: float) -> "InputRegion":
        return InputRegion(self.center, epsilon, self.clip_lo, self.clip_hi)

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class RobustnessProperty:
    true_label: int

    def check(self, net: Network) -> None:
        if not 0 <= self.true_label < net.output_dim:
            raise ValueError(
                f"true label {self.true_label} outside output range 0..{net.output_dim - 1}"
            )


@dataclass
class Activations:
    """Per-layer pre-activations ``pre[i]`` and post-activations ``post[i]``.

    Index 0 holds the input in both lists; the last post entry equals the output
    (no ReLU after the final layer).
    """

    pre: List[np.ndarray] = field(default_factory=list)
    post: List[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.pre[-1]


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, network expects ({net.input_dim},)")
    return x


def forward(net: Network, x) -> Activations:
    x = _check_input(net, x)
    acts = Activations([x], [x])
    h = x
    for i, layer in enumerate(net.layers, start=1):
        z = layer.weights @ h + layer.bias
        h = z if i == net.num_layers else np.maximum(z, 0.0)
        acts.pre.append(z)
        acts.post.append(h)
    return acts


def predict(net: Network, x) -> int:
    return int(np.argmax(forward(net, x).output))


def gradient(net: Network, x, out_coeffs) -> np.ndarray:
    """Gradient of ``out_coeffs . f(x)`` w.r.t. ``x``; ReLU subgradient at 0 is 0."""
    coeffs = np.asarray(out_coeffs, dtype=float)
    if coeffs.shape != (net.output_dim,):
        raise ValueError(f"out_coeffs has shape {coeffs.shape}, expected ({net.output_dim},)")
    acts = forward(net, x)
    g = coeffs
    for i in range(net.num_layers, 0, -1):
        if i < net.num_layers:
            g = g * (acts.pre[i] > 0)
        g = net.weight(i).T @ g
    return g


def load_network(path) -> Network:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: invalid JSON ({exc})") from exc
    return network_from_dict(data)


def network_from_dict(data) -> Network:
    if not isinstance(data, dict) or "layers" not in data:
        raise NetworkFormatError('network JSON must be an object with a "layers" list')
    layers = data["layers"]
    if not isinstance(layers, list) or not layers:
        raise NetworkFormatError("network has an empty layer list")
    weights, biases = [], []
    for i, entry in enumerate(layers, start=1):
        try:
            w = np.asarray(entry["weights"], dtype=float)
            b = np.asarray(entry["bias"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkFormatError(f"layer {i}: cannot read weights/bias ({exc})") from exc
        if w.ndim == 1 and b.ndim == 1 and b.shape[0] == 1:
            w = w.reshape(1, -1)
        weights.append(w)
        biases.append(b)
    return Network.from_arrays(weights, biases)


def save_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict()))


def load_property(path) -> Tuple[InputRegion, RobustnessProperty]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: invalid JSON ({exc})") from exc
    return property_from_dict(data)


def property_from_dict(data) -> Tuple[InputRegion, RobustnessProperty]:
    try:
        center = np.asarray(data["center"], dtype=float)
        eps = float(data["epsilon"])
        label = int(data["true_label"])
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkFormatError(f"property: missing or malformed field ({exc})") from exc
    clip = data.get("clip")
    lo = hi = None
    if clip is not None:
        lo = -np.inf if clip[0] is None else float(clip[0])
        hi = np.inf if clip[1] is None else float(clip[1])
    return InputRegion(center, eps, lo, hi), RobustnessProperty(label)


def property_to_dict(region: InputRegion, prop: RobustnessProperty) -> dict:
    lo = float(region.clip_lo.min())
    hi = float(region.clip_hi.max())
    return {
        "center": region.center.tolist(),
        "epsilon": region.epsilon,
        "clip": [None if np.isinf(lo) else lo, None if np.isinf(hi) else hi],
        "true_label": prop.true_label,
    }


def random_network(widths: Sequence[int], rng: np.random.Generator, bias_scale: float = 0.1,
                   weight_scale: float = 1.0) -> Network:
    """He-style Gaussian network with the given layer widths (input first)."""
    weights, biases = [], []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, weight_scale * np.sqrt(2.0 / d_in), (d_out, d_in)))
        biases.append(rng.normal(0.0, bias_scale, d_out))
    return Network.from_arrays(weights, biases)
