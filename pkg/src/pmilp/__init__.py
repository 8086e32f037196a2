"""Partial-MILP bound tightening and robustness verification for ReLU networks."""

from .bounds import BoundsMap, NeuronStatus, average_uncertainty, box_propagate
from .milp import MilpConfig, MilpResult, MilpStatus, SolverError, build_model, solve_milp
from .model import (InputRegion, Network, NetworkFormatError, RobustnessProperty, forward,
                    load_network, load_property, predict, random_network)
from .pipeline import (AttackConfig, Outcome, Verdict, VerifyConfig, attack, epsilon_search,
                       verify)
from .propagate import PropagationConfig, default_schedule, pmilp_bounds
from .scoring import (ScoreTable, Target, improve_oracle, rate, score_gs, score_huang,
                      score_random, score_sas, select_open_set)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "BoundsMap", "InputRegion", "MilpConfig", "MilpResult", "MilpStatus",
    "Network", "NetworkFormatError", "NeuronStatus", "Outcome", "PropagationConfig",
    "RobustnessProperty", "ScoreTable", "SolverError", "Target", "Verdict", "VerifyConfig",
    "attack", "average_uncertainty", "box_propagate", "build_model", "default_schedule",
    "epsilon_search", "forward", "improve_oracle", "load_network", "load_property",
    "pmilp_bounds", "predict", "random_network", "rate", "score_gs",
    "score_huang", "score_random", "score_sas", "select_open_set", "solve_milp", "verify",
]
