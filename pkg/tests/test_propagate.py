import logging

import numpy as np
import pytest

import pmilp.propagate as propagate_mod
from pmilp.bounds import average_uncertainty, box_propagate
from pmilp.milp import SolverError
from pmilp.model import InputRegion, forward, random_network
from pmilp.oracle import exact_bounds
from pmilp.propagate import (PropagationConfig, ablation_previous_layer_lp, curve_csv,
                             default_schedule, pmilp_bounds, propagate, uncertainty_curve)

from conftest import tiny_instances, two_by_two_net, unit_box


def _same(a, b, tol):
    for k in a.layers:
        np.testing.assert_allclose(a.lb[k], b.lb[k], atol=tol)
        np.testing.assert_allclose(a.ub[k], b.ub[k], atol=tol)


def _inside(inner, outer, tol=1e-6):
    return all(np.all(inner.lb[k] >= outer.lb[k] - tol) and np.all(inner.ub[k] <= outer.ub[k] + tol)
               for k in inner.layers)


@pytest.fixture(scope="module")
def mid_instance():
    rng = np.random.default_rng(21)
    net = random_network([4, 10, 10, 10, 3], rng)
    return net, InputRegion(rng.normal(size=4), 0.3)


def test_default_schedule():
    assert default_schedule(6) == [48, 21, 11, 6, 14]
    assert default_schedule(9) == [48, 21, 11, 6, 3, 2, 1, 14]
    cfg = PropagationConfig(schedule=[5, 2])
    assert [cfg.k_for_layer(k, 5) for k in (2, 3, 4, 5)] == [5, 2, 2, 2]


def test_config_validation():
    with pytest.raises(ValueError):
        PropagationConfig(method="magic")
    with pytest.raises(ValueError):
        PropagationConfig(schedule=[-1])


def test_box_method_is_box(mid_instance):
    net, region = mid_instance
    _same(pmilp_bounds(net, region, PropagationConfig(method="box")), box_propagate(net, region), 0)


def test_empty_open_set_is_lp(mid_instance):
    net, region = mid_instance
    lp = pmilp_bounds(net, region, PropagationConfig(method="lp", skip_stable=False))
    k0 = pmilp_bounds(net, region, PropagationConfig(schedule=[0], extras=0, skip_stable=False))
    _same(lp, k0, 1e-6)


def test_full_milp_matches_oracle_on_small_net():
    net, region = two_by_two_net(), unit_box()
    b = pmilp_bounds(net, region, PropagationConfig(method="full_milp", mip_gap=0,
                                                   skip_stable=False))
    assert b.ub[2][0] == pytest.approx(4.0)
    _same(b, exact_bounds(net, region), 1e-6)


def test_full_milp_matches_oracle_on_random_nets():
    for net, region in tiny_instances(4, seed=31, max_unstable=10):
        b = pmilp_bounds(net, region, PropagationConfig(method="full_milp", mip_gap=0,
                                                       skip_stable=False))
        _same(b, exact_bounds(net, region), 1e-5)


def test_uncertainty_decreases_with_k(mid_instance):
    net, region = mid_instance
    lp = pmilp_bounds(net, region, PropagationConfig(method="lp"))
    k4 = pmilp_bounds(net, region, PropagationConfig(schedule=[4]), refine=lp)
    k8 = pmilp_bounds(net, region, PropagationConfig(schedule=[8]), refine=k4)
    for k in lp.layers:
        u = [average_uncertainty(b, k) for b in (lp, k4, k8)]
        assert u[0] >= u[1] - 1e-9 >= u[2] - 2e-9
    assert _inside(k4, lp) and _inside(k8, k4)
    assert average_uncertainty(k8, 4) < average_uncertainty(lp, 4)


def test_sampled_inputs_stay_inside(mid_instance):
    net, region = mid_instance
    b = pmilp_bounds(net, region, PropagationConfig(schedule=[6]))
    rng = np.random.default_rng(0)
    for x in rng.uniform(region.lower, region.upper, (1000, net.input_dim)):
        acts = forward(net, x)
        for k in b.layers:
            assert np.all(acts.pre[k] >= b.lb[k] - 1e-7) and np.all(acts.pre[k] <= b.ub[k] + 1e-7)


def test_worker_count_does_not_change_results():
    net, region = tiny_instances(1, seed=33)[0]
    cfg = PropagationConfig(schedule=[3], mip_gap=0)
    one = pmilp_bounds(net, region, cfg)
    two = pmilp_bounds(net, region, PropagationConfig(schedule=[3], mip_gap=0, workers=2))
    _same(one, two, 0)


def test_solver_failure_falls_back_to_interval(monkeypatch, caplog):
    net, region = two_by_two_net(), unit_box()

    def broken(*args, **kwargs):
        raise SolverError("simulated")

    monkeypatch.setattr(propagate_mod, "objective_bound", broken)
    with caplog.at_level(logging.WARNING):
        b = pmilp_bounds(net, region, PropagationConfig(skip_stable=False))
    _same(b, box_propagate(net, region), 0)
    assert "simulated" in caplog.text


def test_skip_stable_keeps_interval_bounds():
    net, region = two_by_two_net(), unit_box()
    b = pmilp_bounds(net, region, PropagationConfig(method="full_milp"))
    assert b.ub[2][0] == 6.0  # stable under Box, so no MILP was run
    assert b.ub[3][0] == pytest.approx(4.0)  # output layer is always solved


def test_ablation_pmilp_fed_is_tighter():
    rng = np.random.default_rng(41)
    net = random_network([3, 8, 8, 8, 2], rng)
    region = InputRegion(rng.normal(size=3), 0.4)
    report = ablation_previous_layer_lp(net, region, PropagationConfig(schedule=[4]))
    u = report.uncertainty()
    assert u["pmilp_fed"][3] <= u["lp_fed"][3] + 1e-6
    assert u["pmilp_fed"][2] <= u["lp_fed"][2] + 1e-6


def test_ablation_needs_depth():
    net, region = two_by_two_net(), unit_box()
    with pytest.raises(ValueError):
        ablation_previous_layer_lp(net, region, PropagationConfig())


def test_ablation_with_nothing_opened_coincides():
    rng = np.random.default_rng(42)
    net = random_network([3, 6, 6, 6, 2], rng)
    region = InputRegion(rng.normal(size=3), 0.3)
    report = ablation_previous_layer_lp(net, region,
                                        PropagationConfig(schedule=[0], extras=0))
    _same(report.lp_fed, report.pmilp_fed, 1e-9)


def test_uncertainty_curve_rows():
    net, region = tiny_instances(1, seed=35)[0]
    L = net.num_layers
    below = exact_bounds(net, region, L - 1)
    n_pool = len(below.unstable(range(1, L)))
    ks = [0, 1, 2, n_pool]
    rows = uncertainty_curve(net, region, L, ["SAS", "GS_FSB", "Huang", "Random"], ks,
                             below=below)
    by = {(r.scorer, r.k): r.mean_uncertainty for r in rows}
    zero = {by[(s, 0)] for s in ("SAS", "GS_FSB", "Huang", "Random")}
    assert len(zero) == 1
    for s in ("SAS", "GS_FSB", "Huang", "Random"):
        vals = [by[(s, k)] for k in ks]
        assert all(a >= b - 1e-6 for a, b in zip(vals, vals[1:]))
    if L - 1 <= 2:
        full = [by[(s, n_pool)] for s in ("SAS", "GS_FSB", "Random")]
        assert max(full) - min(full) <= 1e-5
    text = curve_csv(rows)
    assert text.splitlines()[0] == "scorer,K,mean_uncertainty"
    assert text == curve_csv(uncertainty_curve(net, region, L, ["SAS", "GS_FSB", "Huang",
                                                                "Random"], ks, below=below))
