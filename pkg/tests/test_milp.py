import numpy as np
import pytest

from pmilp.bounds import BoundsMap, box_propagate
from pmilp.milp import (MilpConfig, MilpStatus, ModelError, build_model, solve_milp)
from pmilp.model import InputRegion, Network
from pmilp.oracle import exact_bounds, exact_range

from conftest import tiny_instances, two_by_two_net, unit_box


def relu_probe(lb, ub, x):
    """One input fixed at x, one ReLU with bounds [lb, ub], output = post-activation."""
    net = Network.from_arrays([[[1.0]], [[1.0]]], [[0.0], [0.0]])
    region = InputRegion(np.array([x]), 0.0)
    bounds = BoundsMap.for_region(region)
    bounds.set_layer(1, [lb], [ub])
    return net, region, bounds


def test_relaxation_reaches_triangle_chord():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lb, ub = -rng.uniform(0.1, 3), rng.uniform(0.1, 3)
        x = rng.uniform(lb, ub)
        net, region, bounds = relu_probe(lb, ub, x)
        model = build_model(net, region, bounds)
        res = solve_milp(model, model.layer_objective([1.0]))
        assert res.safe_bound == pytest.approx(ub * (x - lb) / (ub - lb), abs=1e-9)


def test_open_relu_is_exact():
    net, region, bounds = relu_probe(-1.0, 2.0, 0.5)
    model = build_model(net, region, bounds, [(1, 0)])
    for sense in ("max", "min"):
        res = solve_milp(model, model.layer_objective([1.0], sense), MilpConfig(mip_gap=0))
        assert res.safe_bound == pytest.approx(0.5)
    net, region, bounds = relu_probe(-1.0, 2.0, -0.5)
    model = build_model(net, region, bounds, [(1, 0)])
    res = solve_milp(model, model.layer_objective([1.0]), MilpConfig(mip_gap=0))
    assert res.safe_bound == pytest.approx(0.0, abs=1e-9)


def test_full_milp_exact_on_small_net():
    net, region = two_by_two_net(), unit_box()
    bounds = box_propagate(net, region)
    model = build_model(net, region, bounds, bounds.unstable([1]), up_to=2)
    res = solve_milp(model, model.layer_objective([1.0, 0.0]), MilpConfig(mip_gap=0))
    assert res.status is MilpStatus.PROVEN
    assert res.safe_bound == pytest.approx(4.0)
    relaxed = build_model(net, region, bounds, (), up_to=2)
    lp = solve_milp(relaxed, relaxed.layer_objective([1.0, 0.0]))
    assert lp.safe_bound > 4.0


def test_matches_enumeration_on_random_nets():
    for net, region in tiny_instances(6, seed=11, max_unstable=10):
        exact = exact_bounds(net, region)
        L = net.num_layers
        model = build_model(net, region, exact, exact.unstable(range(1, L)), up_to=L)
        for j in range(net.output_dim):
            for sense, want in (("max", exact.ub[L][j]), ("min", exact.lb[L][j])):
                res = solve_milp(model, model.neuron_objective((L, j), sense),
                                 MilpConfig(mip_gap=0))
                assert res.safe_bound == pytest.approx(want, abs=1e-5)


def test_timeout_bound_stays_safe():
    for net, region in tiny_instances(4, seed=12):
        exact = exact_bounds(net, region)
        L = net.num_layers
        model = build_model(net, region, exact, exact.unstable(range(1, L)), up_to=L)
        c = np.array([1.0, -1.0])
        _, hi = exact_range(net, region, L, c)
        res = solve_milp(model, model.layer_objective(c), MilpConfig(timeout_s=0.0))
        assert res.safe_bound >= hi - 1e-6


def test_gap_stop_is_within_gap():
    net, region = tiny_instances(1, seed=13)[0]
    exact = exact_bounds(net, region)
    L = net.num_layers
    model = build_model(net, region, exact, exact.unstable(range(1, L)), up_to=L)
    res = solve_milp(model, model.neuron_objective((L, 0)), MilpConfig(mip_gap=0.05))
    assert res.safe_bound >= exact.ub[L][0] - 1e-6
    assert res.gap <= 0.05 + 1e-12


def test_open_set_validation():
    net, region = two_by_two_net(), unit_box()
    bounds = box_propagate(net, region)
    with pytest.raises(ModelError, match="strictly below"):
        build_model(net, region, bounds, [(2, 0)], up_to=2)
    with pytest.raises(ModelError, match="up_to"):
        build_model(net, region, bounds, up_to=7)


def test_stable_neurons_get_no_indicator():
    net, region = two_by_two_net(), unit_box()
    bounds = box_propagate(net, region)
    model = build_model(net, region, bounds, [(1, 0), (2, 0)], up_to=3)
    assert model.open_set == frozenset({(1, 0)})


def test_branch_orders_agree():
    net, region = tiny_instances(1, seed=14)[0]
    exact = exact_bounds(net, region)
    L = net.num_layers
    X = exact.unstable(range(1, L))
    model = build_model(net, region, exact, X, up_to=L)
    obj = model.neuron_objective((L, 1))
    a = solve_milp(model, obj, MilpConfig(mip_gap=0, branch_order=list(reversed(X))))
    b = solve_milp(model, obj, MilpConfig(mip_gap=0, branch_order="most_fractional"))
    assert a.safe_bound == pytest.approx(b.safe_bound, abs=1e-6)
