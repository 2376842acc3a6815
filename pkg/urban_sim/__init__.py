# urban_sim package
from .config import UrbanSimSettings, default_settings
from .engine import Engine, EventKind, RngStreams
from .errors import (
    UrbanSimError,
    ScenarioError,
    ScenarioNotFoundError,
    ScenarioSyntaxError,
    ScenarioValidationError,
    SchedulingError,
    LedgerInvariantError,
    OutputError,
)
from .metrics import MetricsSummary, summarize
from .oracle import max_disjoint_count, qos_paths, vertex_min_cut
from .routing import select_disjoint_paths
from .runner import RunResult, run_scenario
from .scenario import ScenarioConfig, effective_config, parse_scenario, parse_scenario_text
from .simulation import Simulation, run_simulation

__all__ = [
    "UrbanSimSettings",
    "default_settings",
    "Engine",
    "EventKind",
    "RngStreams",
    # Errors
    "UrbanSimError",
    "ScenarioError",
    "ScenarioNotFoundError",
    "ScenarioSyntaxError",
    "ScenarioValidationError",
    "SchedulingError",
    "LedgerInvariantError",
    "OutputError",
    # Scenario and runs
    "ScenarioConfig",
    "parse_scenario",
    "parse_scenario_text",
    "effective_config",
    "Simulation",
    "run_simulation",
    "RunResult",
    "run_scenario",
    "MetricsSummary",
    "summarize",
    # Path selection and its brute-force references
    "select_disjoint_paths",
    "qos_paths",
    "max_disjoint_count",
    "vertex_min_cut",
]
