import numpy as np
import pytest

from pmilp.bounds import box_propagate
from pmilp.model import InputRegion, RobustnessProperty, forward, predict, random_network
from pmilp.oracle import (MAX_UNSTABLE, OracleGuardError, exact_bounds, exact_range,
                          exact_verify, grid_range)
from pmilp.propagate import PropagationConfig, pmilp_bounds

from conftest import tiny_instances, two_by_two_net, unit_box

# enumeration result on the two-by-two net, frozen
SMALL_NET_MAX_Z5 = 4.0


def test_small_net_max_below_box():
    lo, hi = exact_range(two_by_two_net(), unit_box(), 2, [1.0, 0.0])
    assert hi == pytest.approx(SMALL_NET_MAX_Z5, abs=1e-9)
    assert hi < box_propagate(two_by_two_net(), unit_box()).ub[2][0]
    assert lo == pytest.approx(0.0, abs=1e-9)


def test_all_stable_equals_lp():
    rng = np.random.default_rng(1)
    net = random_network([2, 4, 4, 2], rng)
    region = InputRegion(rng.normal(size=2), 1e-3)
    box = box_propagate(net, region)
    assert not box.unstable(range(1, 3))
    lp = pmilp_bounds(net, region, PropagationConfig(method="lp", skip_stable=False))
    ex = exact_bounds(net, region)
    for k in ex.layers:
        np.testing.assert_allclose(ex.lb[k], lp.lb[k], atol=1e-7)
        np.testing.assert_allclose(ex.ub[k], lp.ub[k], atol=1e-7)


def test_guard():
    rng = np.random.default_rng(2)
    net = random_network([4, 30, 30, 2], rng)
    region = InputRegion(np.zeros(4), 5.0)
    assert len(box_propagate(net, region).unstable(range(1, 3))) > MAX_UNSTABLE
    with pytest.raises(OracleGuardError):
        exact_bounds(net, region)


def test_contains_samples_and_patterns():
    for net, region in tiny_instances(3, seed=3):
        ex = exact_bounds(net, region)
        rng = np.random.default_rng(0)
        for x in rng.uniform(region.lower, region.upper, (1000, net.input_dim)):
            acts = forward(net, x)
            for k in ex.layers:
                assert np.all(acts.pre[k] >= ex.lb[k] - 1e-7)
                assert np.all(acts.pre[k] <= ex.ub[k] + 1e-7)


def test_grid_inner_approximation():
    for net, region in tiny_instances(3, seed=4):
        L = net.num_layers
        c = np.array([1.0, -1.0])
        lo, hi = exact_range(net, region, L, c)
        glo, ghi = grid_range(net, region, L, c, points=41)
        assert lo <= glo + 1e-9 and ghi <= hi + 1e-9
        assert hi - ghi < 0.1 * (hi - lo) + 1e-6


def test_verify_point_region_robust():
    rng = np.random.default_rng(5)
    net = random_network([3, 5, 5, 3], rng)
    x = rng.normal(size=3)
    assert exact_verify(net, InputRegion(x, 0.0), RobustnessProperty(predict(net, x))).robust


def test_witness_misclassified():
    rng = np.random.default_rng(6)
    found = 0
    for _ in range(40):
        net = random_network([2, 5, 5, 3], rng)
        x = rng.normal(size=2)
        region = InputRegion(x, 0.8)
        if len(box_propagate(net, region).unstable(range(1, 3))) > 12:
            continue
        res = exact_verify(net, region, RobustnessProperty(predict(net, x)))
        if res.witness is not None:
            found += 1
            assert predict(net, res.witness) != predict(net, x)
            assert region.contains(res.witness)
            assert not res.robust
    assert found > 0
