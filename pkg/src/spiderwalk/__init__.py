"""Molecular spiders in i.i.d. random environments on Z."""
from .analysis import (canonical_paths, confinement_bound, congestion_bound, exact_gap,
                       resistance_series, transition_probabilities)
from .env import (Environment, EnvironmentSpec, is_t_good, kappa_solve, potential,
                  validate_spec, valleys)
from .sim import (ClockMode, exit_time, hitting_time, occupation_estimate, regeneration_scan,
                  run_replicas, speed_estimators, step)
from .spider import LocalConfigSet, SpiderState, build_graph, neighbors, parse_L, validate_L

__version__ = "0.1.0"

__all__ = [
    "ClockMode", "Environment", "EnvironmentSpec", "LocalConfigSet", "SpiderState",
    "build_graph", "canonical_paths", "confinement_bound", "congestion_bound", "exact_gap",
    "exit_time", "hitting_time", "is_t_good", "kappa_solve", "neighbors",
    "occupation_estimate", "parse_L", "potential", "regeneration_scan", "resistance_series",
    "run_replicas", "speed_estimators", "step", "transition_probabilities", "validate_L",
    "validate_spec", "valleys",
]
