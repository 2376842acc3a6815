"""Builds a network from a ScenarioConfig and runs it on the event engine."""

import itertools
import logging
from typing import List, Optional

from .engine import Engine, Event, EventKind, RngStreams
from .metrics import MetricsCollector, MetricsSummary
from .node import Node
from .radio import Channel, Position
from .scenario import ScenarioConfig
from .trace import TraceSink, Tracer
from .workload import generate_traffic, make_data_packet

logger = logging.getLogger(__name__)


def initial_positions(cfg: ScenarioConfig, rngs: RngStreams) -> List[Position]:
    if isinstance(cfg.nodes.placement, list):
        return [Position(float(x), float(y)) for x, y in cfg.nodes.placement]
    rng = rngs.stream("placement")
    return [
        Position(float(rng.uniform(0.0, cfg.area.width_m)), float(rng.uniform(0.0, cfg.area.height_m)))
        for _ in range(cfg.nodes.count)
    ]


class Simulation:
    """One isolated run: engine, channel, nodes, traffic and the metrics sink."""

    def __init__(self, cfg: ScenarioConfig, sinks: Optional[List[TraceSink]] = None):
        self.cfg = cfg
        self.engine = Engine()
        self.rngs = RngStreams(cfg.seed)
        self.collector = MetricsCollector()
        self.tracer = Tracer(self.engine, [self.collector, *(sinks or [])])
        self._packet_ids = itertools.count()

        self.nodes: List[Node] = []
        self.channel = Channel(self.engine, self.rngs.stream("radio"), self.nodes)
        for node_id, position in enumerate(initial_positions(cfg, self.rngs)):
            self.nodes.append(Node(
                node_id, cfg, self.engine, self.channel, self.rngs, position,
                self.tracer.emit, self.next_packet_id,
            ))
        self._schedules = {flow.flow_id: generate_traffic(flow) for flow in cfg.traffic}
        self._subscribe()
        self.finished = False

    def next_packet_id(self) -> int:
        return next(self._packet_ids)

    def _subscribe(self) -> None:
        nodes = self.nodes
        handlers = {
            EventKind.HELLO_TIMER: lambda e: nodes[e.target].routing.on_hello_timer(),
            EventKind.FRAME_RX_BEGIN: lambda e: nodes[e.target].on_frame_rx_begin(e.payload),
            EventKind.FRAME_DELIVERY: lambda e: nodes[e.target].on_frame_delivery(e.payload),
            EventKind.TX_END: lambda e: nodes[e.target].link.on_tx_end(),
            EventKind.MAC_FAILURE: lambda e: nodes[e.target].on_mac_failure(e.payload),
            EventKind.MOBILITY_DEPART: lambda e: nodes[e.target].mobility.depart(),
            EventKind.MOBILITY_ARRIVE: lambda e: nodes[e.target].mobility.arrive(),
            EventKind.IDLE_TIMEOUT: lambda e: nodes[e.target].energy.on_idle_timeout(),
            EventKind.BATTERY_DEPLETED: lambda e: nodes[e.target].energy.on_depleted(),
            EventKind.NODE_FAILURE: lambda e: nodes[e.target].fail(),
            EventKind.DISCOVERY_TIMEOUT: lambda e: nodes[e.target].routing.on_discovery_timeout(*e.payload),
            EventKind.REPLY_WINDOW: lambda e: nodes[e.target].routing.on_reply_window(e.payload),
            EventKind.REPAIR_TIMEOUT: lambda e: nodes[e.target].routing.on_repair_timeout(e.payload),
            EventKind.PACKET_CREATE: self._on_packet_create,
            EventKind.RESERVATION_EXPIRE: self._on_reservation_expire,
            EventKind.RESERVATION_IDLE: self._on_reservation_idle,
        }
        for kind, handler in handlers.items():
            self.engine.subscribe(kind, handler)

    # --- Traffic ---

    def _on_packet_create(self, event: Event) -> None:
        flow, index = event.payload
        node = self.nodes[flow.src]
        if not node.alive:
            return
        packet = make_data_packet(
            flow,
            self.next_packet_id(),
            self.engine.now(),
            ttl=max(self.cfg.routing.net_diameter_ttl, flow.qos.max_hops) + 1,
            priority=node.qos.initial_priority(flow),
        )
        node.trace("pkt_create", packet.id, flow.flow_id, dst=flow.dst, deadline=packet.body.deadline)
        times = self._schedules[flow.flow_id]
        if index + 1 < len(times):
            self.engine.schedule(times[index + 1], flow.src, EventKind.PACKET_CREATE, (flow, index + 1))
        node.routing.route_from_source(packet)

    def _on_reservation_expire(self, event: Event) -> None:
        node = self.nodes[event.target]
        if node.qos.on_reservation_expire(event.payload):
            node.trace("release", flow_id=event.payload, reason="flow_stop")

    def _on_reservation_idle(self, event: Event) -> None:
        node = self.nodes[event.target]
        if node.qos.on_reservation_idle(event.payload):
            node.trace("release", flow_id=event.payload, reason="idle")

    # --- Run ---

    def _start(self) -> None:
        for node in self.nodes:
            node.start()
        for flow in self.cfg.traffic:
            times = self._schedules[flow.flow_id]
            if times:
                self.engine.schedule(times[0], flow.src, EventKind.PACKET_CREATE, (flow, 0))
        for failure in self.cfg.failures:
            if failure.at <= self.cfg.duration_s:
                self.engine.schedule(failure.at, failure.node, EventKind.NODE_FAILURE, None)

    def run(self) -> MetricsSummary:
        logger.info("Running %d nodes, %d flows for %.3f s (seed %d)",
                    len(self.nodes), len(self.cfg.traffic), self.cfg.duration_s, self.cfg.seed)
        self._start()
        self.engine.run_until(self.cfg.duration_s)
        self._finalize()
        summary = self.collector.summarize()
        logger.info("Finished after %d events: delivery ratio %s", self.engine.dispatched, summary.delivery_ratio)
        return summary

    def _finalize(self) -> None:
        if self.finished:
            return
        self.finished = True
        now = self.engine.now()
        for node in self.nodes:
            node.energy.finalize(now)
        sources = {flow.flow_id: flow.src for flow in self.cfg.traffic}
        for packet_id, flow_id in sorted(self.collector.open_packets.items()):
            self.tracer.emit(sources[flow_id], "pkt_end", packet_id, flow_id, status="in_transit")
        for node in self.nodes:
            node.report_energy()


def run_simulation(cfg: ScenarioConfig, sinks: Optional[List[TraceSink]] = None) -> MetricsSummary:
    return Simulation(cfg, sinks).run()
