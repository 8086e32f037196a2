import numpy as np
import pytest

from pmilp.bounds import BoundsMap, box_propagate
from pmilp.model import InputRegion, Network, random_network


def two_by_two_net() -> Network:
    """Two inputs, two hidden ReLU layers of two, identity output layer."""
    return Network.from_arrays(
        [[[1.0, 1.0], [1.0, -1.0]], [[1.0, 2.0], [0.0, 1.0]], np.eye(2)],
        [np.zeros(2), np.zeros(2), np.zeros(2)],
    )


def unit_box(dim: int = 2) -> InputRegion:
    return InputRegion(np.zeros(dim), 1.0)


def chain_net(c: float, d: float) -> Network:
    """x -> a -> b -> z with weights 1, c, d and no bias."""
    return Network.from_arrays([[[1.0]], [[c]], [[d]]], [[0.0], [0.0], [0.0]])


def chain_bounds() -> BoundsMap:
    """Bounds [-1, 1] on a and b, as in the hand analysis of the chain."""
    b = BoundsMap(np.array([-1.0]), np.array([1.0]))
    b.set_layer(1, [-1.0], [1.0])
    b.set_layer(2, [-1.0], [1.0])
    return b


def tiny_instances(count: int, seed: int, max_unstable: int = 12, eps=(0.1, 0.5)):
    """Random dense nets with 2 or 3 hidden layers and few unstable neurons under Box."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        hidden = int(rng.integers(2, 4))
        widths = [3] + [int(rng.integers(4, 7)) for _ in range(hidden)] + [2]
        net = random_network(widths, rng)
        region = InputRegion(rng.normal(size=3), float(rng.uniform(*eps)))
        n_unstable = len(box_propagate(net, region).unstable(range(1, net.num_layers)))
        if 1 <= n_unstable <= max_unstable:
            out.append((net, region))
    return out


@pytest.fixture
def fig_net():
    return two_by_two_net()


@pytest.fixture
def fig_region():
    return unit_box()
