"""Decentralised EV valley-filling control with for-purpose attack injection."""

from .attacks import AttackSpec, deviation_bound_audit, make_hooks
from .engine import SolverConfig, ValleyProblem, build_problem, objective, run
from .feeder import BaselineLoad, FeederModel, build_adjacency, build_sensitivity
from .fleet import EvSpec, Fleet, project_feasible, shrink_project
from .metrics import RunReport, compare, flatness, stealthiness
from .oracle import grid_brute_force, solve_reference
from .scenario import ScenarioConfig, bundled_scenario, execute, load_config, validate

__version__ = "0.1.0"
