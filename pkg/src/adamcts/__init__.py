"""Adaptive risk-aware Monte Carlo tree search for non-stationary MDPs."""
from .belief import DirichletBelief, EnsembleBelief, TuneConfig, dpas_deltas, init_from_previous
from .gridworld import build_mdp, make_env, standard_layouts
from .mdp import MdpSnapshot, NonStationarySchedule, TransitionRecord, discounted_return
from .search import SearchConfig, plan

__version__ = "0.1.0"

__all__ = [
    "DirichletBelief", "EnsembleBelief", "TuneConfig", "dpas_deltas", "init_from_previous",
    "build_mdp", "make_env", "standard_layouts",
    "MdpSnapshot", "NonStationarySchedule", "TransitionRecord", "discounted_return",
    "SearchConfig", "plan",
]
