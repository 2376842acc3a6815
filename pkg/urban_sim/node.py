"""One mobile node: the per-node modules wired together around a single output link."""

import logging
from collections import deque
from typing import TYPE_CHECKING, Callable, Deque, Optional, Tuple

from .energy import EnergyAccount, EnergyManager, EnergyState, Trigger, tx_power_for_range
from .engine import Engine, EventKind, SimTime
from .mobility import MobilityManager
from .packets import BROADCAST, Packet, PacketKind
from .qos import QosManager
from .radio import Channel, Delivery, Frame, Position, serialization_time
from .routing import RoutingAgent
from .scenario import ScenarioConfig

if TYPE_CHECKING:
    from .engine import RngStreams

logger = logging.getLogger(__name__)

# Events a dead node still has to see: frames already in the air and feedback for its own last frame
_AFTER_DEATH = frozenset({EventKind.FRAME_RX_BEGIN, EventKind.FRAME_DELIVERY, EventKind.TX_END, EventKind.MAC_FAILURE})


class OutputLink:
    """Control FIFO with strict precedence over the QoS data scheduler; one frame on the air at a time."""

    def __init__(self, node: "Node"):
        self.node = node
        self.control: Deque[Tuple[Packet, int]] = deque()
        self.busy = False
        self.frames_sent = 0

    def send_control(self, packet: Packet, next_hop: int) -> None:
        if not self.node.alive:
            return
        self.control.append((packet, next_hop))
        self.kick()

    def _next_frame(self) -> Optional[Tuple[Packet, int]]:
        node = self.node
        if self.control:
            return self.control.popleft()
        while True:
            packet, expired = node.qos.dequeue()
            for late in expired:
                node.finish(late, "deadline_miss", reason="expired_in_queue")
            if packet is None:
                return None
            next_hop = node.routing.next_hop_for(packet)
            if next_hop is not None:
                return packet, next_hop
            node.routing.on_dequeued_without_route(packet)

    def kick(self) -> None:
        node = self.node
        if self.busy or not node.alive:
            return
        item = self._next_frame()
        if item is None:
            return
        packet, next_hop = item
        now = node.engine.now()
        size_bits = node.radio.frame_overhead + packet.payload_bits()

        tx_power = None
        if node.cfg.energy.range_adjust:
            if next_hop == BROADCAST:
                reach = node.radio.tx_range
            else:
                reach = max(node.position_at(now).distance_to(node.channel.nodes[next_hop].position_at(now)), 1e-6)
            tx_power = tx_power_for_range(node.cfg.energy.range, reach)

        node.energy.trigger(Trigger.TX_BEGIN, tx_power)
        if not node.alive:
            if not packet.is_control:
                node.finish(packet, "routing_drop", reason="node_dead")
            return

        self.busy = True
        self.frames_sent += 1
        node.trace("tx", packet.id, packet.flow_id, kind=packet.kind.value, to=next_hop, bits=size_bits)
        node.channel.transmit(Frame(node.id, next_hop, size_bits, packet), now)
        node.engine.schedule(now + serialization_time(size_bits, node.radio.bitrate), node.id, EventKind.TX_END, None)

    def on_tx_end(self) -> None:
        self.busy = False
        self.node.energy.trigger(Trigger.TX_END)
        self.kick()

    def clear(self) -> None:
        self.control.clear()


class Node:
    def __init__(
        self,
        node_id: int,
        cfg: ScenarioConfig,
        engine: Engine,
        channel: Channel,
        rngs: "RngStreams",
        initial: Position,
        trace: Callable[..., None],
        next_packet_id: Callable[[], int],
    ):
        self.id = node_id
        self.cfg = cfg
        self.engine = engine
        self.channel = channel
        self.radio = cfg.radio.for_node(node_id)
        self._trace = trace
        self.next_packet_id = next_packet_id

        self.energy = EnergyManager(
            node_id,
            EnergyAccount(cfg.energy.power, cfg.nodes.initial_battery_j),
            engine,
            on_death=self._on_death,
            on_state_change=self._on_energy_state,
        )
        self.mobility = MobilityManager(
            node_id, cfg.mobility, cfg.area, initial, rngs.stream(f"mobility/{node_id}"), engine, self._on_motion
        )
        sizes = [flow.packet_size for flow in cfg.traffic] or [8000]
        nominal_bits = self.radio.frame_overhead + sum(sizes) / len(sizes)
        self.qos = QosManager(node_id, cfg.qos, engine, nominal_bits / self.radio.bitrate)
        self.link = OutputLink(self)
        self.routing = RoutingAgent(self, rngs.stream(f"routing/{node_id}"))

    @property
    def alive(self) -> bool:
        return self.energy.alive

    def position_at(self, t: SimTime) -> Position:
        return self.mobility.position_at(t)

    def trace(self, event_type: str, packet_id: Optional[int] = None, flow_id: Optional[int] = None, **fields) -> None:
        self._trace(self.id, event_type, packet_id, flow_id, **fields)

    def finish(self, packet: Packet, status: str, **fields) -> None:
        """Records the terminal status of a data packet."""
        self.trace("pkt_end", packet.id, packet.flow_id, status=status, **fields)

    def start(self) -> None:
        self.energy.start()
        self.mobility.start()
        self.routing.start()

    # --- Radio ---

    def on_frame_rx_begin(self, delivery: Delivery) -> None:
        self.energy.trigger(Trigger.RX_BEGIN)

    def on_frame_delivery(self, delivery: Delivery) -> None:
        packet = delivery.frame.packet
        if not self.alive:
            if not packet.is_control:
                self.finish(packet, "routing_drop", reason="receiver_dead")
            return
        self.energy.trigger(Trigger.RX_END)
        if not self.alive:
            if not packet.is_control:
                self.finish(packet, "routing_drop", reason="receiver_dead")
            return
        if delivery.lost:
            if packet.kind is PacketKind.DATA:
                self.finish(packet, "link_loss", sender=delivery.frame.src)
            return
        self.routing.receive(packet, delivery.frame.src)

    def on_mac_failure(self, frame: Frame) -> None:
        packet = frame.packet
        if not self.alive:
            if not packet.is_control:
                self.finish(packet, "routing_drop", reason="node_dead")
            return
        self.trace("mac_failure", packet.id, packet.flow_id, kind=packet.kind.value, next_hop=frame.dst)
        self.routing.on_mac_failure(packet, frame.dst)

    # --- Energy and mobility callbacks ---

    def _on_energy_state(self, previous: EnergyState, state: EnergyState) -> None:
        self.trace("energy_state", src=previous.value, dst=state.value)

    def _on_motion(self, moving: bool) -> None:
        self.energy.trigger(Trigger.MOVE_START if moving else Trigger.MOVE_STOP)
        if self.alive:
            pos = self.position_at(self.engine.now())
            self.trace("move_start" if moving else "move_stop", x=pos.x, y=pos.y)
            self.routing.on_motion(moving)

    def fail(self) -> None:
        """Injected failure at the current instant."""
        self.energy.fail()

    def _on_death(self, at: SimTime) -> None:
        now = self.engine.now()
        self.engine.cancel_target(self.id, _AFTER_DEATH)
        self.mobility.freeze(now)
        self.link.clear()
        self.trace("node_death", death_time=at, discarded=self.energy.account.failure_discarded_j)
        for packet in self.qos.scheduler.drain():
            self.finish(packet, "routing_drop", reason="node_dead")
        self.routing.on_death()
        self.qos.release_all()

    def report_energy(self) -> None:
        account = self.energy.account
        fields = {
            "joules": account.consumed_total,
            "battery": account.battery_joules,
            "discarded": account.failure_discarded_j,
            "death_time": account.death_time,
        }
        for state in EnergyState:
            fields[f"j_{state.value}"] = account.consumed_per_state[state]
            fields[f"s_{state.value}"] = account.occupancy_per_state[state]
        self.trace("node_energy", **fields)
