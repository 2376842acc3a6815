import json

import pytest

from urban_sim.errors import ScenarioNotFoundError, ScenarioSyntaxError, ScenarioValidationError
from urban_sim.scenario import effective_config, parse_scenario, parse_scenario_text


def _text(data):
    return json.dumps(data, indent=2)


def test_minimal_scenario_fills_every_default(minimal_scenario):
    cfg = parse_scenario_text(_text(minimal_scenario))
    assert cfg.seed == 1
    assert cfg.radio.tx_range == 250.0
    assert cfg.mobility.kind == "static"
    assert cfg.energy.power.p_roaming == cfg.energy.power.p_receive
    assert cfg.routing.neighbor_timeout == pytest.approx(3.0)
    assert cfg.routing.reply_window > 0
    assert cfg.qos.capacity_bps == cfg.radio.bitrate
    assert cfg.qos.nominal_hop_delay == pytest.approx((272 + 8000) / 2e6 + 0.0005)
    flow = cfg.traffic[0]
    assert (flow.flow_id, flow.start, flow.stop) == (0, 0.0, 5.0)
    assert cfg.default_priority() == 2


def test_effective_config_reparses_to_the_same_config(minimal_scenario):
    cfg = parse_scenario_text(_text(minimal_scenario))
    again = parse_scenario_text(json.dumps(effective_config(cfg)))
    assert effective_config(again) == effective_config(cfg)


def test_eta_above_one_is_rejected(minimal_scenario):
    minimal_scenario["qos"] = {"eta": 1.5}
    with pytest.raises(ScenarioValidationError) as exc_info:
        parse_scenario_text(_text(minimal_scenario))
    assert exc_info.value.exit_code == 2
    assert any("qos.eta" in m for m in exc_info.value.messages)


def test_unknown_key_is_rejected_with_its_line(minimal_scenario):
    minimal_scenario["mobility"] = {"kind": "random_waypoint", "spee": 3}
    text = _text(minimal_scenario)
    with pytest.raises(ScenarioValidationError) as exc_info:
        parse_scenario_text(text)
    (message,) = exc_info.value.messages
    expected_line = next(i for i, line in enumerate(text.splitlines(), start=1) if '"spee"' in line)
    assert "unknown key 'spee'" in message
    assert message.startswith(f"line {expected_line}:")


@pytest.mark.parametrize("update, fragment", [
    ({"traffic": [{"src": 0, "dst": 0, "rate": 1000}]}, "src and dst must differ"),
    ({"traffic": [{"src": 0, "dst": 5, "rate": 1000}]}, "node ids must be"),
    ({"traffic": [{"src": 0, "dst": 1, "rate": 1000, "start": 3.0, "stop": 2.0}]}, "start must be < stop"),
    ({"nodes": {"count": 2, "placement": [[0, 0]]}}, "lists 1 positions"),
    ({"nodes": {"count": 2, "placement": [[0, 0], [5000, 0]]}}, "outside the area"),
    ({"failures": [{"node": 9, "at": 1.0}]}, "failures[0]"),
    ({"energy": {"power": {"p_sleep": 2.0}}}, "p_sleep < p_receive"),
    ({"mobility": {"kind": "random_waypoint", "v_min": 0}}, "v_min"),
])
def test_cross_field_errors(minimal_scenario, update, fragment):
    minimal_scenario.update(update)
    with pytest.raises(ScenarioValidationError) as exc_info:
        parse_scenario_text(_text(minimal_scenario))
    assert fragment in str(exc_info.value)


def test_duplicate_flow_ids_are_rejected(minimal_scenario):
    minimal_scenario["traffic"] = [
        {"flow_id": 4, "src": 0, "dst": 1, "rate": 1000},
        {"flow_id": 4, "src": 1, "dst": 0, "rate": 1000},
    ]
    with pytest.raises(ScenarioValidationError, match="duplicate flow_id 4"):
        parse_scenario_text(_text(minimal_scenario))


def test_syntax_error_carries_position():
    with pytest.raises(ScenarioSyntaxError) as exc_info:
        parse_scenario_text('{\n  "nodes": {"count": 2},\n  "duration_s": 5.0,\n}')
    assert exc_info.value.exit_code == 4
    assert exc_info.value.line == 4


def test_non_object_document_is_a_validation_error():
    with pytest.raises(ScenarioValidationError):
        parse_scenario_text("[1, 2, 3]")


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioNotFoundError) as exc_info:
        parse_scenario(tmp_path / "nope.json")
    assert exc_info.value.exit_code == 3


def test_file_overrides_seed_and_duration(tmp_path, minimal_scenario):
    path = tmp_path / "s.json"
    path.write_text(_text(minimal_scenario))
    cfg = parse_scenario(path, seed=99, duration_s=2.5)
    assert (cfg.seed, cfg.duration_s) == (99, 2.5)
    assert cfg.traffic[0].stop == 2.5


@pytest.mark.parametrize("name", ["line5", "diamond", "two_bridge", "repair", "reference"])
def test_shipped_scenarios_are_valid(scenarios_dir, name):
    cfg = parse_scenario(scenarios_dir / f"{name}.json")
    assert cfg.traffic


def test_invalid_utf8_is_a_syntax_error(tmp_path):
    path = tmp_path / "binary.json"
    path.write_bytes(b"\xff\xfe{")
    with pytest.raises(ScenarioSyntaxError) as exc_info:
        parse_scenario(path)
    assert exc_info.value.exit_code == 4
    assert "UTF-8" in str(exc_info.value)


@pytest.mark.parametrize("text", [
    '{"nodes": {"count": 2}, "duration_s": Infinity}',
    '{"nodes": {"count": 2}, "duration_s": NaN}',
    '{"nodes": {"count": 2}, "duration_s": 5.0, "qos": {"eta": NaN}}',
    '{"nodes": {"count": 2}, "duration_s": 5.0, "radio": {"tx_range": Infinity}}',
])
def test_non_finite_numbers_are_rejected(text):
    with pytest.raises(ScenarioValidationError) as exc_info:
        parse_scenario_text(text)
    assert exc_info.value.exit_code == 2


def test_duration_has_a_finite_ceiling(minimal_scenario):
    minimal_scenario["duration_s"] = 1e12
    with pytest.raises(ScenarioValidationError, match="duration_s"):
        parse_scenario_text(_text(minimal_scenario))


def test_infinite_duration_override_is_rejected(tmp_path, minimal_scenario):
    path = tmp_path / "s.json"
    path.write_text(_text(minimal_scenario))
    with pytest.raises(ScenarioValidationError):
        parse_scenario(path, duration_s=float("inf"))
