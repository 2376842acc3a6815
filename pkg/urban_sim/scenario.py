"""Scenario schema, parsing and validation.

A scenario is one JSON document describing a full run: area, nodes, radio,
mobility, energy, routing and QoS parameters, traffic and the seed. Every
omitted field takes the default documented on the model below; derived
defaults (neighbor timeout, reply window, QoS capacity and nominal hop delay)
are resolved during validation so the effective config is fully concrete.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ScenarioNotFoundError, ScenarioSyntaxError, ScenarioValidationError

logger = logging.getLogger(__name__)

# Control frame payload used to estimate the one-hop delay for the reply window
_REFERENCE_CONTROL_BITS = 256
_DEFAULT_PACKET_BITS = 8000
# Longest run the schema accepts, in seconds of simulated time
MAX_DURATION_S = 1e7


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class AreaConfig(_Strict):
    width_m: float = Field(1000.0, gt=0)
    height_m: float = Field(1000.0, gt=0)


class NodesConfig(_Strict):
    count: int = Field(..., ge=1)
    placement: Union[Literal["uniform_random"], List[Tuple[float, float]]] = "uniform_random"
    initial_battery_j: float = Field(1000.0, gt=0)


class RadioOverride(_Strict):
    node: int = Field(..., ge=0)
    tx_range: Optional[float] = Field(None, gt=0)
    bitrate: Optional[float] = Field(None, gt=0)


class RadioConfig(_Strict):
    tx_range: float = Field(250.0, gt=0, description="meters")
    bitrate: float = Field(2_000_000.0, gt=0, description="bits/second")
    frame_overhead: int = Field(272, ge=0, description="bits")
    loss_probability: float = Field(0.0, ge=0, le=1)
    proc_jitter_max: float = Field(0.001, ge=0, description="seconds")
    mac_feedback: bool = True
    overrides: List[RadioOverride] = Field(default_factory=list)

    def for_node(self, node_id: int) -> "RadioConfig":
        """Effective radio parameters for one node after per-node overrides."""
        update: Dict[str, Any] = {}
        for override in self.overrides:
            if override.node == node_id:
                if override.tx_range is not None:
                    update["tx_range"] = override.tx_range
                if override.bitrate is not None:
                    update["bitrate"] = override.bitrate
        return self.model_copy(update=update) if update else self


class MobilityModelConfig(_Strict):
    kind: Literal["static", "random_waypoint"] = "static"
    v_min: float = Field(1.0, ge=0, description="m/s")
    v_max: float = Field(5.0, ge=0, description="m/s")
    pause: float = Field(2.0, ge=0, description="seconds")

    @model_validator(mode="after")
    def _check_speeds(self) -> "MobilityModelConfig":
        if self.kind == "random_waypoint" and not (0 < self.v_min <= self.v_max):
            raise ValueError("random_waypoint requires 0 < v_min <= v_max")
        return self


class PowerProfile(_Strict):
    p_sleep: float = Field(0.01, ge=0, description="watts")
    p_receive: float = Field(1.0, ge=0, description="watts")
    p_transmit: float = Field(1.4, ge=0, description="watts")
    p_roaming: Optional[float] = Field(None, ge=0, description="watts; defaults to p_receive")
    idle_timeout: float = Field(0.5, gt=0, description="seconds")

    @model_validator(mode="after")
    def _check_order(self) -> "PowerProfile":
        if self.p_roaming is None:
            self.p_roaming = self.p_receive
        if not (self.p_sleep < self.p_receive < self.p_transmit):
            raise ValueError("power profile requires p_sleep < p_receive < p_transmit")
        if not self.p_sleep < self.p_roaming:
            raise ValueError("power profile requires p_sleep < p_roaming")
        return self


class RangeConfig(_Strict):
    p_elec: float = Field(0.775, ge=0, description="watts")
    k: float = Field(1e-5, gt=0, description="watts per meter^alpha")
    alpha: float = Field(2.0, ge=1)


class EnergyConfig(_Strict):
    power: PowerProfile = Field(default_factory=PowerProfile)
    range: RangeConfig = Field(default_factory=RangeConfig)
    range_adjust: bool = False


class RoutingConfig(_Strict):
    hello_interval: float = Field(1.0, gt=0)
    neighbor_timeout: Optional[float] = Field(None, gt=0, description="defaults to 3 x hello_interval")
    max_copies_per_rreq: int = Field(3, ge=1)
    reply_window: Optional[float] = Field(None, gt=0, description="defaults to 2 x one-hop delay x net_diameter_ttl")
    max_paths: int = Field(3, ge=1)
    repair_ttl: int = Field(2, ge=1)
    repair_timeout: float = Field(0.5, gt=0)
    local_repair: bool = True
    discovery_timeout: float = Field(1.0, gt=0)
    max_discovery_retries: int = Field(2, ge=0)
    unroutable_holdoff: float = Field(5.0, ge=0)
    net_diameter_ttl: int = Field(10, ge=1)
    multipath_policy: Literal["round_robin", "primary_backup"] = "round_robin"
    hello_on_motion_stop: bool = False


class QosConfig(_Strict):
    eta: float = Field(0.9, gt=0, le=1)
    capacity_bps: Optional[float] = Field(None, gt=0, description="defaults to the radio bitrate")
    levels: int = Field(4, ge=1)
    window: float = Field(1.0, gt=0)
    promotion_budget: int = Field(50, ge=0)
    demote_factor: float = Field(2.0, gt=0)
    nominal_hop_delay: Optional[float] = Field(None, gt=0, description="defaults to mean serialization + mean jitter")
    reservation_mode: Literal["apriori", "ondemand"] = "apriori"
    queue_capacity: int = Field(64, ge=1)
    retry_backoff: float = Field(1.0, ge=0)
    reservation_idle_timeout: float = Field(5.0, gt=0)
    miss_drop: bool = True


class QosRequirement(_Strict):
    max_delay: float = Field(1.0, gt=0, description="seconds end-to-end")
    max_hops: int = Field(10, gt=0)
    min_bw: float = Field(1.0, gt=0, description="bits/s")


class FlowSpec(_Strict):
    flow_id: Optional[int] = Field(None, ge=0, description="defaults to the flow's list index")
    src: int = Field(..., ge=0)
    dst: int = Field(..., ge=0)
    rate: float = Field(..., gt=0, description="bits/s")
    packet_size: int = Field(_DEFAULT_PACKET_BITS, gt=0, description="bits")
    qos: QosRequirement = Field(default_factory=QosRequirement)
    start: float = Field(0.0, ge=0)
    stop: Optional[float] = Field(None, gt=0, description="defaults to duration_s")
    priority: Optional[int] = Field(None, ge=0, description="initial priority level; defaults to levels // 2")
    multipath: bool = True

    @property
    def interval(self) -> float:
        return self.packet_size / self.rate


class FailureSpec(_Strict):
    node: int = Field(..., ge=0)
    at: float = Field(..., ge=0)


class ScenarioConfig(_Strict):
    area: AreaConfig = Field(default_factory=AreaConfig)
    nodes: NodesConfig
    radio: RadioConfig = Field(default_factory=RadioConfig)
    mobility: MobilityModelConfig = Field(default_factory=MobilityModelConfig)
    energy: EnergyConfig = Field(default_factory=EnergyConfig)
    routing: RoutingConfig = Field(default_factory=RoutingConfig)
    qos: QosConfig = Field(default_factory=QosConfig)
    traffic: List[FlowSpec] = Field(default_factory=list)
    failures: List[FailureSpec] = Field(default_factory=list)
    duration_s: float = Field(..., gt=0, le=MAX_DURATION_S)
    seed: int = Field(1, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _cross_checks(self) -> "ScenarioConfig":
        count = self.nodes.count

        if isinstance(self.nodes.placement, list):
            if len(self.nodes.placement) != count:
                raise ValueError(f"nodes.placement lists {len(self.nodes.placement)} positions for {count} nodes")
            for i, (x, y) in enumerate(self.nodes.placement):
                if not (0 <= x <= self.area.width_m and 0 <= y <= self.area.height_m):
                    raise ValueError(f"nodes.placement[{i}] = ({x}, {y}) lies outside the area")

        for override in self.radio.overrides:
            if override.node >= count:
                raise ValueError(f"radio.overrides references node {override.node} but nodes.count is {count}")

        seen_ids = set()
        for index, flow in enumerate(self.traffic):
            if flow.flow_id is None:
                flow.flow_id = index
            if flow.flow_id in seen_ids:
                raise ValueError(f"traffic[{index}]: duplicate flow_id {flow.flow_id}")
            seen_ids.add(flow.flow_id)
            if flow.src >= count or flow.dst >= count:
                raise ValueError(f"traffic[{index}]: node ids must be < nodes.count ({count})")
            if flow.src == flow.dst:
                raise ValueError(f"traffic[{index}]: src and dst must differ")
            if flow.stop is None:
                flow.stop = self.duration_s
            if not flow.start < flow.stop:
                raise ValueError(f"traffic[{index}]: start must be < stop")
            if flow.priority is not None and flow.priority >= self.qos.levels:
                raise ValueError(f"traffic[{index}]: priority must be < qos.levels ({self.qos.levels})")

        for index, failure in enumerate(self.failures):
            if failure.node >= count:
                raise ValueError(f"failures[{index}]: node {failure.node} must be < nodes.count ({count})")

        self._fill_derived_defaults()
        return self

    def _fill_derived_defaults(self) -> None:
        routing, radio, qos = self.routing, self.radio, self.qos
        if routing.neighbor_timeout is None:
            routing.neighbor_timeout = 3.0 * routing.hello_interval
        if routing.reply_window is None:
            one_hop = (radio.frame_overhead + _REFERENCE_CONTROL_BITS) / radio.bitrate + radio.proc_jitter_max / 2.0
            routing.reply_window = 2.0 * one_hop * routing.net_diameter_ttl
        if qos.capacity_bps is None:
            qos.capacity_bps = radio.bitrate
        if qos.nominal_hop_delay is None:
            sizes = [flow.packet_size for flow in self.traffic] or [_DEFAULT_PACKET_BITS]
            mean_bits = radio.frame_overhead + sum(sizes) / len(sizes)
            qos.nominal_hop_delay = mean_bits / radio.bitrate + radio.proc_jitter_max / 2.0

    def default_priority(self) -> int:
        return self.qos.levels // 2


# --- Parsing ---

def _locate_line(text: str, loc: Sequence[Union[str, int]]) -> int:
    """Best-effort line number of the JSON key addressed by a pydantic error location."""
    pos = 0
    for part in loc:
        if not isinstance(part, str):
            continue
        idx = text.find(f'"{part}"', pos)
        if idx < 0:
            break
        pos = idx
    return text.count("\n", 0, pos) + 1


def _format_validation_errors(text: str, exc: ValidationError) -> List[str]:
    messages = []
    for err in exc.errors():
        loc = tuple(err.get("loc", ()))
        dotted = ".".join(str(p) for p in loc) or "<scenario>"
        if err.get("type") == "extra_forbidden":
            msg = f"unknown key '{loc[-1]}' (unknown keys are rejected)"
        else:
            msg = err.get("msg", "invalid value")
        messages.append(f"line {_locate_line(text, loc)}: {dotted}: {msg}")
    return messages


def parse_scenario_text(text: str, overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """Parses and validates scenario JSON text; `overrides` replace top-level keys before validation."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioSyntaxError(f"line {e.lineno}, column {e.colno}: {e.msg}", e.lineno, e.colno) from e
    if not isinstance(data, dict):
        raise ScenarioValidationError(["line 1: <scenario>: the scenario must be a JSON object"])
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ScenarioValidationError(_format_validation_errors(text, e)) from e


def parse_scenario(path: Union[str, Path], seed: Optional[int] = None, duration_s: Optional[float] = None) -> ScenarioConfig:
    """Reads, parses and validates a scenario file.

    Args:
        path: Scenario JSON file
        seed: Optional override of the scenario seed
        duration_s: Optional override of the run duration

    Raises:
        ScenarioNotFoundError: the file is missing or unreadable
        ScenarioSyntaxError: the file is not valid UTF-8 or not valid JSON
        ScenarioValidationError: the content violates the schema
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ScenarioNotFoundError(f"scenario file not found: {path}") from e
    except UnicodeDecodeError as e:
        raise ScenarioSyntaxError(f"byte {e.start}: not valid UTF-8 ({e.reason})") from e
    except OSError as e:
        raise ScenarioNotFoundError(f"cannot read scenario file {path}: {e}") from e
    cfg = parse_scenario_text(text, {"seed": seed, "duration_s": duration_s})
    logger.info("Loaded scenario %s (%d nodes, %d flows, %.3f s)", path, cfg.nodes.count, len(cfg.traffic), cfg.duration_s)
    return cfg


def effective_config(cfg: ScenarioConfig) -> Dict[str, Any]:
    """The config with every default filled, as plain JSON-compatible data."""
    return cfg.model_dump(mode="json")
