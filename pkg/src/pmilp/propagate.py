"""Layer-by-layer bound tightening with partial MILPs.

For every neuron of a layer the engine picks a small open set per sense, builds
the MILP over all earlier layers with the bounds fixed so far, and keeps the
safe bound of the solve. Neurons of one layer are independent, so they can go
to a process pool; the next layer starts only when the whole layer is done.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bounds import BoundsMap, affine_interval, average_uncertainty, box_propagate, status_of
from .bounds import NeuronStatus
from .milp import MilpConfig, MilpModel, SolverError, build_model, solve_milp
from .model import InputRegion, Network, NeuronId
from .scoring import Target, lp_solution, sas_from_solution, score, score_gs, select_open_set

log = logging.getLogger(__name__)

METHODS = ("box", "lp", "pmilp", "full_milp")
HALVING = (48, 21, 11, 6, 3, 2, 1)
OUTPUT_K = 14


def default_schedule(num_layers: int) -> List[int]:
    """Open-set sizes for layers ``2..num_layers``: halving list, then 14 at the output."""
    hidden = max(num_layers - 2, 0)
    body = [HALVING[min(i, len(HALVING) - 1)] for i in range(hidden)]
    return body + [OUTPUT_K]


@dataclass
class PropagationConfig:
    method: str = "pmilp"
    scorer: str = "SAS"
    schedule: Optional[Sequence[int]] = None  # entry i applies to layer i + 2
    extras: int = 3
    threshold: float = 0.01
    mip_gap: float = 1e-3
    timeout_s: float = 60.0
    workers: int = 1
    seed: int = 0
    skip_stable: bool = True
    branch_order: str = "gs"  # "gs": open set ordered by GS_FSB rank; or "most_fractional"

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.schedule is not None:
            self.schedule = [int(k) for k in self.schedule]
            if not self.schedule or min(self.schedule) < 0:
                raise ValueError("schedule must be a nonempty list of nonnegative counts")
        if self.branch_order not in ("gs", "most_fractional"):
            raise ValueError(f"unknown branch order {self.branch_order!r}")

    def k_for_layer(self, layer: int, num_layers: int) -> int:
        sched = self.schedule if self.schedule is not None else default_schedule(num_layers)
        return sched[min(max(layer - 2, 0), len(sched) - 1)]

    def milp_config(self) -> MilpConfig:
        return MilpConfig(mip_gap=self.mip_gap, timeout_s=self.timeout_s)

    def to_dict(self) -> dict:
        return {
            "method": self.method, "scorer": self.scorer,
            "schedule": None if self.schedule is None else list(self.schedule),
            "extras": self.extras, "threshold": self.threshold, "mip_gap": self.mip_gap,
            "timeout_s": self.timeout_s, "workers": self.workers, "seed": self.seed,
            "skip_stable": self.skip_stable, "branch_order": self.branch_order,
        }


@dataclass
class NeuronRecord:
    nid: NeuronId
    lb: float
    ub: float
    open_max: Tuple[NeuronId, ...] = ()
    open_min: Tuple[NeuronId, ...] = ()
    seconds: float = 0.0
    fallback: bool = False


@dataclass
class PropagationRun:
    bounds: BoundsMap
    records: Dict[NeuronId, NeuronRecord] = field(default_factory=dict)
    layer_seconds: Dict[int, float] = field(default_factory=dict)

    def open_sets(self) -> Dict[Tuple[NeuronId, str], Tuple[NeuronId, ...]]:
        out = {}
        for nid, rec in self.records.items():
            out[(nid, "max")] = rec.open_max
            out[(nid, "min")] = rec.open_min
        return out


def objective_bound(net: Network, region: InputRegion, bounds: BoundsMap, target: Target,
                    sense: str, cfg: PropagationConfig, k_min: int,
                    open_set: Optional[Sequence[NeuronId]] = None,
                    lp_model: MilpModel = None):
    """Safe bound of ``target`` in one sense; returns ``(bound, open set used)``.

    With ``open_set`` given, no scoring happens.
    """
    if cfg.method == "lp" or (open_set is None and cfg.method == "pmilp" and k_min == 0
                              and cfg.extras == 0):
        _, _, value = lp_solution(net, region, bounds, target, sense, lp_model)
        return value, ()
    if open_set is None:
        if cfg.method == "full_milp":
            open_set = bounds.unstable(range(1, target.layer))
        else:
            seed = [cfg.seed, target.layer, int(np.argmax(np.abs(target.coeffs))),
                    0 if sense == "max" else 1]
            if cfg.scorer.upper() == "SAS":
                lp_model, primal, _ = lp_solution(net, region, bounds, target, sense, lp_model)
                table = sas_from_solution(net, bounds, target, sense, lp_model, primal)
            else:
                table = score(cfg.scorer, net, region, bounds, target, sense, seed)
            open_set = select_open_set(table, k_min, cfg.extras, cfg.threshold)
    open_set = tuple(open_set)
    if not open_set:
        _, _, value = lp_solution(net, region, bounds, target, sense, lp_model)
        return value, ()
    mcfg = cfg.milp_config()
    if cfg.branch_order == "gs":
        gs = score_gs(net, bounds, target, "FSB", sense)
        rank = {nid: i for i, (nid, _) in enumerate(gs.ranked())}
        mcfg.branch_order = sorted(open_set, key=lambda n: (rank.get(n, len(rank)), n))
    model = build_model(net, region, bounds, open_set, up_to=target.layer)
    res = solve_milp(model, model.layer_objective(target.coeffs, sense), mcfg)
    return res.safe_bound, open_set


def _neuron_task(args):
    net, region, bounds, nid, cfg, k_min, fixed, lb0, ub0 = args
    start = time.perf_counter()
    target = Target.neuron(net, nid)
    lb, ub = lb0, ub0
    used = {"max": (), "min": ()}
    fallback = False
    try:
        lp_model = None
        if cfg.method in ("lp", "pmilp"):
            lp_model = build_model(net, region, bounds, (), up_to=nid[0])
        for sense in ("max", "min"):
            given = None if fixed is None else fixed.get((nid, sense))
            value, used[sense] = objective_bound(net, region, bounds, target, sense, cfg,
                                                 k_min, given, lp_model)
            if sense == "max":
                ub = min(ub, value)
            else:
                lb = max(lb, value)
    except SolverError as exc:
        log.warning("neuron %s: %s; keeping interval bounds", nid, exc)
        lb, ub, fallback = lb0, ub0, True
    if lb > ub:
        # both bounds are sound, so a crossing is round-off around a point range
        mid = 0.5 * (lb + ub)
        lb = ub = mid
    return NeuronRecord(nid, lb, ub, used["max"], used["min"],
                        time.perf_counter() - start, fallback)


def propagate(net: Network, region: InputRegion, cfg: PropagationConfig,
              refine: BoundsMap = None, start: BoundsMap = None, last_layer: int = None,
              open_sets: Dict = None) -> PropagationRun:
    """Bounds for layers up to ``last_layer`` (default: all).

    ``start`` supplies already-fixed bounds for a prefix of layers, which are
    kept as they are. ``refine`` is intersected into every new layer, so a run
    is never looser than the map it refines. ``open_sets`` maps
    ``((layer, index), sense)`` to a fixed open set and bypasses scoring.
    """
    last_layer = net.num_layers if last_layer is None else last_layer
    box = box_propagate(net, region)
    bounds = BoundsMap.for_region(region)
    first = 1
    if start is not None:
        for k in start.layers:
            if k <= last_layer:
                bounds.set_layer(k, *start.pre(k))
        while bounds.has(first):
            first += 1
    run = PropagationRun(bounds)
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for k in range(first, last_layer + 1):
            t0 = time.perf_counter()
            lo, hi = affine_interval(net.weight(k), net.bias(k), *bounds.post(k - 1))
            lo = np.maximum(lo, box.lb[k])
            hi = np.minimum(hi, box.ub[k])
            if refine is not None and refine.has(k):
                lo = np.maximum(lo, refine.lb[k])
                hi = np.minimum(hi, refine.ub[k])
                hi = np.maximum(hi, lo)
            if cfg.method != "box" and k > 1:
                k_min = cfg.k_for_layer(k, net.num_layers)
                tasks = []
                for j in range(net.width(k)):
                    hidden = k < net.num_layers
                    if (cfg.skip_stable and hidden
                            and status_of(lo[j], hi[j]) is not NeuronStatus.UNSTABLE):
                        continue
                    tasks.append((net, region, bounds, (k, j), cfg, k_min, open_sets,
                                  float(lo[j]), float(hi[j])))
                results = pool.map(_neuron_task, tasks) if pool else map(_neuron_task, tasks)
                for rec in results:
                    lo[rec.nid[1]], hi[rec.nid[1]] = rec.lb, rec.ub
                    run.records[rec.nid] = rec
            bounds.set_layer(k, lo, hi)
            run.layer_seconds[k] = time.perf_counter() - t0
    finally:
        if pool is not None:
            pool.shutdown()
    return run


def pmilp_bounds(net: Network, region: InputRegion, cfg: PropagationConfig,
                 refine: BoundsMap = None) -> BoundsMap:
    return propagate(net, region, cfg, refine=refine).bounds


@dataclass
class AblationReport:
    layer: int
    lp_fed: BoundsMap
    pmilp_fed: BoundsMap

    def uncertainty(self) -> Dict[str, Dict[int, float]]:
        layers = range(1, self.layer + 1)
        return {
            "lp_fed": {k: average_uncertainty(self.lp_fed, k) for k in layers},
            "pmilp_fed": {k: average_uncertainty(self.pmilp_fed, k) for k in layers},
        }


def ablation_previous_layer_lp(net: Network, region: InputRegion, cfg: PropagationConfig,
                               layer: int = 3) -> AblationReport:
    """Bounds of ``layer`` when ``layer - 1`` comes from LP versus from pMILP.

    Both runs share everything below ``layer - 1`` and reuse the open sets
    chosen in the LP-fed run, so only the quality of the feeding layer differs.
    """
    if net.num_layers < layer + 1:
        raise ValueError(f"ablation on layer {layer} needs at least {layer} hidden layers")
    base = propagate(net, region, cfg, last_layer=layer - 2).bounds
    lp_cfg = replace(cfg, method="lp")
    lp_prev = propagate(net, region, lp_cfg, start=base, last_layer=layer - 1).bounds
    pm_prev = propagate(net, region, cfg, start=base, refine=lp_prev,
                        last_layer=layer - 1).bounds
    lp_run = propagate(net, region, cfg, start=lp_prev, last_layer=layer)
    pm_run = propagate(net, region, cfg, start=pm_prev, last_layer=layer,
                       refine=lp_run.bounds, open_sets=lp_run.open_sets())
    return AblationReport(layer, lp_run.bounds, pm_run.bounds)


@dataclass
class CurveRow:
    scorer: str
    k: int
    mean_uncertainty: float
    seconds: float


def uncertainty_curve(net: Network, region: InputRegion, layer: int, scorers: Sequence[str],
                      ks: Sequence[int], cfg: PropagationConfig = None,
                      below: BoundsMap = None) -> List[CurveRow]:
    """Mean uncertainty of ``layer`` for each scorer and open-set size.

    Bounds of earlier layers are computed once (LP by default) and shared by
    every row; each row opens exactly ``K`` neurons per bound.
    """
    cfg = cfg or PropagationConfig(mip_gap=0.0)
    if below is None:
        below = propagate(net, region, replace(cfg, method="lp"), last_layer=layer - 1).bounds
    rows = []
    for name in scorers:
        for k in ks:
            run_cfg = replace(cfg, method="pmilp", scorer=name, schedule=[k], extras=0,
                              skip_stable=False)
            t0 = time.perf_counter()
            out = propagate(net, region, run_cfg, start=below.truncated(layer - 1),
                            last_layer=layer).bounds
            rows.append(CurveRow(name, int(k), average_uncertainty(out, layer),
                                 time.perf_counter() - t0))
    return rows


def curve_csv(rows: Sequence[CurveRow], timing: bool = False) -> str:
    """CSV body of a curve; timing columns are optional so the default is reproducible."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    head = ["scorer", "K", "mean_uncertainty"] + (["seconds"] if timing else [])
    writer.writerow(head)
    for r in rows:
        line = [r.scorer, r.k, repr(r.mean_uncertainty)]
        writer.writerow(line + ([f"{r.seconds:.4f}"] if timing else []))
    return buf.getvalue()
