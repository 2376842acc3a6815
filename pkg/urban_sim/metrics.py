"""Run statistics, computed in one pass over the trace stream."""

import logging
from collections import Counter
from typing import Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from .trace import TraceRecord

logger = logging.getLogger(__name__)

TERMINAL_STATUSES = (
    "delivered",
    "deadline_miss",
    "routing_drop",
    "queue_drop",
    "admission_reject",
    "unroutable",
    "link_loss",
    "in_transit",
)


class NodeEnergy(BaseModel):
    node: int
    joules: float
    battery_j: float
    failure_discarded_j: float = 0.0
    death_time: Optional[float] = None
    joules_per_state: Dict[str, float] = Field(default_factory=dict)
    seconds_per_state: Dict[str, float] = Field(default_factory=dict)


class NodeCounters(BaseModel):
    node: int
    admitted: int = 0
    rejected: int = 0
    queue_drops: int = 0
    deadline_misses: int = 0
    frames_sent: int = 0


class MetricsSummary(BaseModel):
    generated: int
    status_counts: Dict[str, int]
    delivery_ratio: Optional[float]
    deadline_miss_ratio: Optional[float]
    mean_delay_s: Optional[float]
    p95_delay_s: Optional[float]
    control_frames: int
    control_overhead: Optional[float]
    discoveries: int
    discovery_retries: int
    mean_disjoint_paths: Optional[float]
    repair_attempts: int
    repair_successes: int
    failovers: int
    # Fresh admission decisions summed over nodes; packets a rejection discards are in status_counts
    admitted: int
    rejected: int
    energy: List[NodeEnergy]
    nodes: List[NodeCounters]


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


class MetricsCollector:
    """Trace sink that accumulates everything MetricsSummary reports."""

    def __init__(self) -> None:
        self.generated = 0
        self.open_packets: Dict[int, Optional[int]] = {}
        self.statuses: Counter = Counter()
        self.delays: List[float] = []
        self.control_frames = 0
        self.discoveries = 0
        self.discovery_retries = 0
        self.path_counts: List[int] = []
        self.repair_attempts = 0
        self.repair_successes = 0
        self.failovers = 0
        self.energy: Dict[int, NodeEnergy] = {}
        self.counters: Dict[int, NodeCounters] = {}

    def _node(self, node_id: int) -> NodeCounters:
        counters = self.counters.get(node_id)
        if counters is None:
            counters = self.counters[node_id] = NodeCounters(node=node_id)
        return counters

    def record(self, rec: TraceRecord) -> None:
        kind = rec.event_type
        if kind == "pkt_create":
            self.generated += 1
            self.open_packets[rec.packet_id] = rec.flow_id
        elif kind == "pkt_end":
            if self.open_packets.pop(rec.packet_id, "missing") == "missing":
                logger.warning("packet %s terminated twice or never created (%s)", rec.packet_id, rec.get("status"))
                return
            status = rec.get("status")
            self.statuses[status] += 1
            if status == "delivered":
                self.delays.append(rec.get("delay"))
            elif status == "queue_drop":
                self._node(rec.node).queue_drops += 1
            elif status == "deadline_miss":
                self._node(rec.node).deadline_misses += 1
        elif kind == "tx":
            self._node(rec.node).frames_sent += 1
            if rec.get("kind") != "data":
                self.control_frames += 1
        elif kind == "rreq_init":
            if rec.get("attempt") == 0:
                self.discoveries += 1
            else:
                self.discovery_retries += 1
        elif kind == "paths_selected":
            if rec.get("count"):
                self.path_counts.append(rec.get("count"))
        elif kind == "repair_start":
            self.repair_attempts += 1
        elif kind == "repair_ok":
            self.repair_successes += 1
        elif kind == "failover":
            self.failovers += 1
        elif kind == "admit":
            self._node(rec.node).admitted += 1
        elif kind == "reject":
            self._node(rec.node).rejected += 1
        elif kind == "node_energy":
            fields = dict(rec.fields)
            self.energy[rec.node] = NodeEnergy(
                node=rec.node,
                joules=fields["joules"],
                battery_j=fields["battery"],
                failure_discarded_j=fields["discarded"],
                death_time=fields["death_time"],
                joules_per_state={k[2:]: v for k, v in fields.items() if k.startswith("j_")},
                seconds_per_state={k[2:]: v for k, v in fields.items() if k.startswith("s_")},
            )

    def summarize(self) -> MetricsSummary:
        generated = self.generated
        delivered = self.statuses["delivered"]
        delays = np.asarray(self.delays, dtype=float)
        nodes = sorted(set(self.counters) | set(self.energy))
        return MetricsSummary(
            generated=generated,
            status_counts={status: self.statuses[status] for status in TERMINAL_STATUSES},
            delivery_ratio=_ratio(delivered, generated),
            deadline_miss_ratio=_ratio(self.statuses["deadline_miss"], generated),
            mean_delay_s=float(delays.mean()) if delays.size else None,
            p95_delay_s=float(np.percentile(delays, 95)) if delays.size else None,
            control_frames=self.control_frames,
            control_overhead=_ratio(self.control_frames, delivered),
            discoveries=self.discoveries,
            discovery_retries=self.discovery_retries,
            mean_disjoint_paths=float(np.mean(self.path_counts)) if self.path_counts else None,
            repair_attempts=self.repair_attempts,
            repair_successes=self.repair_successes,
            failovers=self.failovers,
            admitted=sum(c.admitted for c in self.counters.values()),
            rejected=sum(c.rejected for c in self.counters.values()),
            energy=[self.energy[n] for n in sorted(self.energy)],
            nodes=[self._node(n) for n in nodes],
        )


def summarize(records: Iterable[TraceRecord]) -> MetricsSummary:
    collector = MetricsCollector()
    for rec in records:
        collector.record(rec)
    return collector.summarize()
