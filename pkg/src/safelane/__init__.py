"""Lane-keeping MPC with barrier-based safety filtering.

A desk-scale simulator for a hierarchy of two controllers: a discrete
tracking MPC that follows the lane centerline, and a continuous safety
filter that reshapes its command near the lane edges and around a
detected obstacle. Filters are available in exponential,
prescribed-time, and input-constrained variants. Scenarios are YAML
files; runs produce CSV logs, summaries, and vector figures.
"""

from .barriers import BarrierPair
from .engine import (EngineError, SimConfig, SimLog, replay_check,
                     scenario_pair, simulate_scenario)
from .filters import (FilterConfig, FilterError, PrescribedTime,
                      assemble_and_solve_filter_qp, gain_schedule)
from .mpc import (DiscreteModel, MpcConfig, MpcError, MpcTracker,
                  terminal_ingredients)
from .plots import PlotError, emit_plots
from .road import Obstacle, Road, RoadError
from .scenarios import (Scenario, ScenarioError, builtin_scenarios,
                        load_scenario, parse_scenario, resolve_scenario)
from .vehicle import VehicleParams, lateral_matrices

__version__ = "0.1.0"

__all__ = [
    "BarrierPair", "DiscreteModel", "EngineError", "FilterConfig",
    "FilterError", "MpcConfig", "MpcError", "MpcTracker", "Obstacle",
    "PlotError", "PrescribedTime", "Road", "RoadError", "Scenario",
    "ScenarioError", "SimConfig", "SimLog", "VehicleParams",
    "assemble_and_solve_filter_qp", "builtin_scenarios", "emit_plots",
    "gain_schedule", "lateral_matrices", "load_scenario", "parse_scenario",
    "replay_check", "resolve_scenario", "scenario_pair",
    "simulate_scenario", "terminal_ingredients",
]
