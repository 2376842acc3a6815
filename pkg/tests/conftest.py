import json
from pathlib import Path
from typing import Any, Dict, List

import pytest

from urban_sim.scenario import ScenarioConfig, parse_scenario_text
from urban_sim.simulation import Simulation
from urban_sim.trace import TraceRecord

SCENARIOS_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class ListSink:
    """Keeps every trace record in memory."""

    def __init__(self) -> None:
        self.records: List[TraceRecord] = []

    def record(self, rec: TraceRecord) -> None:
        self.records.append(rec)

    def of(self, event_type: str, node: int = None) -> List[TraceRecord]:
        return [r for r in self.records if r.event_type == event_type and (node is None or r.node == node)]


def _merge(base: Dict[str, Any], updates: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS_DIR


@pytest.fixture
def load_scenario():
    """Loads a shipped scenario with nested keys replaced by `updates`."""
    def _load(name: str, **updates: Any) -> ScenarioConfig:
        data = json.loads((SCENARIOS_DIR / f"{name}.json").read_text(encoding="utf-8"))
        return parse_scenario_text(json.dumps(_merge(data, updates)))
    return _load


@pytest.fixture
def run_traced():
    """Runs a config in memory; returns (simulation, summary, sink)."""
    def _run(cfg: ScenarioConfig):
        sink = ListSink()
        simulation = Simulation(cfg, [sink])
        summary = simulation.run()
        return simulation, summary, sink
    return _run


@pytest.fixture
def minimal_scenario() -> Dict[str, Any]:
    return {
        "nodes": {"count": 2},
        "duration_s": 5.0,
        "traffic": [{"src": 0, "dst": 1, "rate": 8000}],
    }


@pytest.fixture
def build_traced():
    """Builds a simulation without running it; returns (simulation, sink)."""
    def _build(cfg: ScenarioConfig):
        sink = ListSink()
        return Simulation(cfg, [sink]), sink
    return _build
