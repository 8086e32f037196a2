"""Robustness verdicts: attack first, then LP margins, then partial MILP margins."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .milp import SolverError
from .model import InputRegion, Network, RobustnessProperty, forward, gradient, predict
from .propagate import PropagationConfig, objective_bound, propagate
from .scoring import Target

log = logging.getLogger(__name__)


class Outcome(enum.Enum):
    VERIFIED = "Verified"
    FALSIFIED = "Falsified"
    UNDECIDED = "Undecided"


@dataclass
class Verdict:
    outcome: Outcome
    distance: float  # max certified upper bound of z_j - z_t; negative iff verified
    margins: Dict[int, float] = field(default_factory=dict)
    witness: Optional[np.ndarray] = None
    timings: Dict[str, float] = field(default_factory=dict)
    stage: str = ""
    diagnostics: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "outcome": self.outcome.value,
            "distance": self.distance,
            "margins": {str(j): m for j, m in sorted(self.margins.items())},
            "stage": self.stage,
            "timings": self.timings,
        }
        if self.witness is not None:
            out["witness"] = self.witness.tolist()
        if self.diagnostics:
            out["diagnostics"] = list(self.diagnostics)
        return out


@dataclass
class AttackConfig:
    steps: int = 100
    restarts: int = 10
    step_size: Optional[float] = None  # default: epsilon / 10
    seed: int = 0


@dataclass
class VerifyConfig:
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    run_attack: bool = True


def _margins(net: Network, x: np.ndarray, t: int) -> np.ndarray:
    out = forward(net, x).output
    m = out - out[t]
    m[t] = -np.inf
    return m


def attack(net: Network, region: InputRegion, prop: RobustnessProperty,
           cfg: AttackConfig = None) -> Optional[np.ndarray]:
    """Projected sign-gradient ascent on the largest margin; returns a confirmed witness."""
    cfg = cfg or AttackConfig()
    prop.check(net)
    t = prop.true_label
    lo, hi = region.lower, region.upper
    rng = np.random.default_rng(cfg.seed)
    step = cfg.step_size if cfg.step_size is not None else region.epsilon / 10.0

    def confirmed(x):
        return predict(net, x) != t and region.contains(x)

    for restart in range(max(cfg.restarts, 1)):
        if restart == 0:
            x = region.project(region.center)
        else:
            x = rng.uniform(lo, hi)
        if confirmed(x):
            return x
        if step <= 0:
            continue
        for _ in range(cfg.steps):
            m = _margins(net, x, t)
            j = int(np.argmax(m))
            c = np.zeros(net.output_dim)
            c[j], c[t] = 1.0, -1.0
            x = np.clip(x + step * np.sign(gradient(net, x, c)), lo, hi)
            if confirmed(x):
                return x
    return None


def _margin_bounds(net, region, bounds, t, cfg: PropagationConfig, targets=None):
    k_min = cfg.k_for_layer(net.num_layers, net.num_layers)
    margins = {}
    for j in range(net.output_dim):
        if j == t or (targets is not None and j not in targets):
            continue
        value, _ = objective_bound(net, region, bounds, Target.margin(net, j, t), "max", cfg,
                                   k_min)
        margins[j] = value
    return margins


def verify(net: Network, region: InputRegion, prop: RobustnessProperty,
           cfg: VerifyConfig = None) -> Verdict:
    cfg = cfg or VerifyConfig()
    prop.check(net)
    t = prop.true_label
    if predict(net, region.center) != t:
        raise ValueError(f"center is classified as {predict(net, region.center)}, not {t}")
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()

    if cfg.run_attack:
        x = attack(net, region, prop, cfg.attack)
        timings["attack"] = time.perf_counter() - t0
        if x is not None:
            m = _margins(net, x, t)
            return Verdict(Outcome.FALSIFIED, float(np.max(m)),
                           {j: float(v) for j, v in enumerate(m) if j != t}, x, timings,
                           "attack")

    pcfg = cfg.propagation
    hidden = net.num_layers - 1
    try:
        t1 = time.perf_counter()
        lp_cfg = replace(pcfg, method="lp")
        lp = propagate(net, region, lp_cfg, last_layer=hidden).bounds
        margins = _margin_bounds(net, region, lp, t, lp_cfg)
        timings["lp"] = time.perf_counter() - t1
        if max(margins.values()) < 0:
            return Verdict(Outcome.VERIFIED, max(margins.values()), margins, None, timings,
                           "lp")
        if pcfg.method in ("box", "lp"):
            return Verdict(Outcome.UNDECIDED, max(margins.values()), margins, None, timings,
                           "lp")

        t2 = time.perf_counter()
        tight = propagate(net, region, pcfg, refine=lp, last_layer=hidden).bounds
        open_j = {j for j, m in margins.items() if m >= 0}
        refined = _margin_bounds(net, region, tight, t, pcfg, open_j)
        for j, m in refined.items():
            margins[j] = min(margins[j], m)
        timings["pmilp"] = time.perf_counter() - t2
    except SolverError as exc:
        log.warning("verification aborted: %s", exc)
        return Verdict(Outcome.UNDECIDED, np.inf, {}, None, timings, "error", [str(exc)])

    distance = max(margins.values())
    outcome = Outcome.VERIFIED if distance < 0 else Outcome.UNDECIDED
    return Verdict(outcome, distance, margins, None, timings, "pmilp")


@dataclass
class EpsilonSearch:
    certified: float
    falsified: Optional[float]
    probes: List[Tuple[float, str]] = field(default_factory=list)


def epsilon_search(net: Network, center, prop: RobustnessProperty, cfg: VerifyConfig = None,
                   eps_lo: float = 0.0, eps_hi: float = 1.0, iters: int = 10,
                   clip_lo=None, clip_hi=None) -> EpsilonSearch:
    """Bisection on the radius: verified probes raise ``certified``, the rest lower ``hi``.

    ``falsified`` is the smallest radius at which a witness was found.
    """
    if eps_hi <= 0:
        raise ValueError("eps_hi must be positive")
    certified, falsified = eps_lo, None
    lo, hi = eps_lo, eps_hi
    probes = []
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        region = InputRegion(np.asarray(center, float), mid, clip_lo, clip_hi)
        verdict = verify(net, region, prop, cfg)
        probes.append((mid, verdict.outcome.value))
        if verdict.outcome is Outcome.VERIFIED:
            certified = lo = mid
        else:
            hi = mid
            if verdict.outcome is Outcome.FALSIFIED:
                falsified = mid if falsified is None else min(falsified, mid)
    return EpsilonSearch(certified, falsified, probes)
