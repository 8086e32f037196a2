"""Command line entry point.

Exit codes: 0 verified, 1 falsified, 2 undecided, 3 usage or input error,
4 oracle size guard exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .bounds import box_propagate
from .model import NetworkFormatError, forward, load_network, load_property, predict
from .oracle import OracleGuardError, exact_verify
from .pipeline import AttackConfig, Outcome, VerifyConfig, attack, epsilon_search, verify
from .propagate import PropagationConfig, curve_csv, propagate, uncertainty_curve

EXIT = {Outcome.VERIFIED: 0, Outcome.FALSIFIED: 1, Outcome.UNDECIDED: 2}
EXIT_USAGE = 3
EXIT_GUARD = 4

log = logging.getLogger("pmilp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    network: Optional[str] = None
    property: Optional[str] = None
    epsilon: Optional[float] = None
    method: str = "pmilp"
    scorer: Optional[str] = None
    k: Optional[List[int]] = None
    schedule: Optional[List[int]] = None
    mip_gap: float = 1e-3
    timeout: float = 60.0
    workers: int = 1
    seed: int = 0
    out: str = "pmilp_out"
    layer: Optional[int] = None
    eps_hi: float = 1.0
    iters: int = 10
    extras: int = 3
    threshold: float = 0.01
    extra: dict = field(default_factory=dict)

    def propagation(self) -> PropagationConfig:
        schedule = self.schedule
        if schedule is None and self.k is not None:
            schedule = self.k[:1]
        return PropagationConfig(method=self.method, scorer=(self.scorer or "SAS").split(",")[0],
                                 schedule=schedule, extras=self.extras,
                                 threshold=self.threshold, mip_gap=self.mip_gap,
                                 timeout_s=self.timeout, workers=self.workers, seed=self.seed)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "extra"}
        d.update(self.extra)
        return d


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("network", nargs="?", help="network JSON")
    common.add_argument("property", nargs="?", help="property JSON (center, epsilon, true_label)")
    common.add_argument("--config", help="JSON run config; flags override its values")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--method", choices=["box", "lp", "pmilp", "full_milp"])
    common.add_argument("--scorer", help="SAS, GS_FSB, GS_SR, Huang, Random (comma list for compare)")
    common.add_argument("--k", type=_int_list, help="open-set size(s); a list for compare")
    common.add_argument("--schedule", type=_int_list, help="per-layer open-set sizes from layer 2")
    common.add_argument("--mip-gap", dest="mip_gap", type=float)
    common.add_argument("--timeout", type=float, help="seconds per MILP call")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="pmilp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pmilp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("verify", parents=[common], help="attack, LP and pMILP certification")
    sub.add_parser("bounds", parents=[common], help="per-neuron bounds as CSV")
    cmp_ = sub.add_parser("compare", parents=[common], help="uncertainty curve over scorers and K")
    cmp_.add_argument("--layer", type=int, help="target layer (default: last hidden)")
    sub.add_parser("oracle", parents=[common], help="exact verdict by pattern enumeration")
    sub.add_parser("attack", parents=[common], help="gradient attack only")
    eps = sub.add_parser("eps-search", parents=[common], help="bisection on the radius")
    eps.add_argument("--eps-hi", dest="eps_hi", type=float)
    eps.add_argument("--iters", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        for key, value in data.items():
            key = key.replace("-", "_")
            if key in RunConfig.__dataclass_fields__ and key != "extra":
                setattr(cfg, key, value)
            else:
                cfg.extra[key] = value
    for key in ("network", "property", "epsilon", "method", "scorer", "k", "schedule", "mip_gap",
                "timeout", "workers", "seed", "out", "layer", "eps_hi", "iters"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if isinstance(cfg.k, int):
        cfg.k = [cfg.k]
    if not cfg.network or not cfg.property:
        raise UsageError("a network and a property file are required (positional or config)")
    return cfg


def _load(cfg: RunConfig):
    net = load_network(cfg.network)
    region, prop = load_property(cfg.property)
    if cfg.epsilon is not None:
        region = region.with_epsilon(cfg.epsilon)
    prop.check(net)
    return net, region, prop


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _manifest(out: Path, command: str, cfg: RunConfig, started: float, extra: dict) -> None:
    body = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "seconds": time.perf_counter() - started,
    }
    body.update(extra)
    _write(out, "manifest.json", json.dumps(body, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _verify_config(cfg: RunConfig) -> VerifyConfig:
    return VerifyConfig(cfg.propagation(), AttackConfig(seed=cfg.seed))


def cmd_verify(cfg: RunConfig, out: Path, started: float) -> int:
    net, region, prop = _load(cfg)
    verdict = verify(net, region, prop, _verify_config(cfg))
    record = verdict.to_dict()
    record["config"] = cfg.to_dict()
    record["version"] = __version__
    if verdict.witness is not None:
        _write(out, "witness.json", json.dumps({"input": verdict.witness.tolist(),
                                                "label": predict(net, verdict.witness)}) + "\n")
    text = json.dumps(record, indent=2, default=_json_default)
    _write(out, "verdict.json", text + "\n")
    print(text)
    _manifest(out, "verify", cfg, started, {"outcome": verdict.outcome.value})
    return EXIT[verdict.outcome]


def cmd_bounds(cfg: RunConfig, out: Path, started: float) -> int:
    net, region, _ = _load(cfg)
    pcfg = cfg.propagation()
    if pcfg.method == "box":
        bounds = box_propagate(net, region)
    else:
        bounds = propagate(net, region, pcfg).bounds
    path = _write(out, "bounds.csv", bounds.to_csv())
    _manifest(out, "bounds", cfg, started, {"propagation": pcfg.to_dict(), "csv": str(path)})
    print(path)
    return 0


def cmd_compare(cfg: RunConfig, out: Path, started: float) -> int:
    net, region, _ = _load(cfg)
    layer = cfg.layer if cfg.layer is not None else net.num_layers - 1
    if not 2 <= layer <= net.num_layers:
        raise UsageError(f"--layer must be in 2..{net.num_layers}")
    scorers = [s for s in (cfg.scorer or "SAS,GS_FSB,Huang,Random").split(",") if s]
    ks = cfg.k if cfg.k is not None else [0, 2, 4, 8]
    pcfg = cfg.propagation()
    rows = uncertainty_curve(net, region, layer, scorers, ks, pcfg)
    _write(out, "curve.csv", curve_csv(rows))
    _write(out, "curve_timing.csv", curve_csv(rows, timing=True))
    lines = [f"# pmilp {__version__} seed={cfg.seed} layer={layer}",
             "# K mean_uncertainty seconds"]
    for name in scorers:
        lines.append(f"# scorer {name}")
        lines.extend(f"{r.k} {r.mean_uncertainty!r} {r.seconds:.4f}"
                     for r in rows if r.scorer == name)
        lines.extend(["", ""])
    _write(out, "curve.dat", "\n".join(lines) + "\n")
    _manifest(out, "compare", cfg, started, {"layer": layer, "scorers": scorers, "K": ks})
    print(curve_csv(rows, timing=True), end="")
    return 0


def cmd_oracle(cfg: RunConfig, out: Path, started: float) -> int:
    net, region, prop = _load(cfg)
    res = exact_verify(net, region, prop)
    record = {
        "robust": res.robust,
        "max_margins": {str(j): float(m) for j, m in enumerate(res.max_margins)
                        if j != prop.true_label},
        "witness": None if res.witness is None else res.witness.tolist(),
    }
    text = json.dumps(record, indent=2)
    _write(out, "oracle.json", text + "\n")
    print(text)
    _manifest(out, "oracle", cfg, started, {"robust": res.robust})
    return EXIT[Outcome.VERIFIED if res.robust else Outcome.FALSIFIED]


def cmd_attack(cfg: RunConfig, out: Path, started: float) -> int:
    net, region, prop = _load(cfg)
    x = attack(net, region, prop, AttackConfig(seed=cfg.seed))
    record = {"found": x is not None}
    if x is not None:
        record.update(input=x.tolist(), label=predict(net, x),
                      output=forward(net, x).output.tolist())
        _write(out, "witness.json", json.dumps({"input": x.tolist(), "label": predict(net, x)})
               + "\n")
    text = json.dumps(record, indent=2)
    _write(out, "attack.json", text + "\n")
    print(text)
    _manifest(out, "attack", cfg, started, {"found": x is not None})
    return EXIT[Outcome.FALSIFIED] if x is not None else EXIT[Outcome.UNDECIDED]


def cmd_eps_search(cfg: RunConfig, out: Path, started: float) -> int:
    net, region, prop = _load(cfg)
    res = epsilon_search(net, region.center, prop, _verify_config(cfg), 0.0, cfg.eps_hi,
                         cfg.iters, region.clip_lo, region.clip_hi)
    record = {"certified": res.certified, "falsified": res.falsified,
              "probes": [{"epsilon": e, "outcome": o} for e, o in res.probes]}
    text = json.dumps(record, indent=2)
    _write(out, "eps_search.json", text + "\n")
    print(text)
    _manifest(out, "eps-search", cfg, started, {})
    return 0


COMMANDS = {
    "verify": cmd_verify, "bounds": cmd_bounds, "compare": cmd_compare,
    "oracle": cmd_oracle, "attack": cmd_attack, "eps-search": cmd_eps_search,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, Path(cfg.out), started)
    except OracleGuardError as exc:
        print(f"pmilp: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (UsageError, NetworkFormatError, ValueError, OSError) as exc:
        print(f"pmilp: {exc}", file=sys.stderr)
        return EXIT_USAGE
