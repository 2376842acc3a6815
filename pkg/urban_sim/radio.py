"""Ground-truth positions, unit-disk connectivity and an idealized radio/MAC.

The MAC has no contention or collisions: a frame reaches every alive node
within the sender's transmission range after its serialization time plus a
bounded processing jitter, and each delivery is independently dropped with
the configured loss probability.
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence

from .engine import Engine, EventKind, SimTime
from .packets import BROADCAST, Packet
from .scenario import RadioConfig

if TYPE_CHECKING:
    import numpy as np
    from .node import Node

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def in_range(a: Position, b: Position, range_m: float) -> bool:
    """Unit-disk link test, boundary inclusive."""
    return a.distance_to(b) <= range_m


@dataclass
class Frame:
    src: int
    dst: int
    size_bits: int
    packet: Packet

    @property
    def is_broadcast(self) -> bool:
        return self.dst == BROADCAST


@dataclass
class Delivery:
    frame: Frame
    receiver: int
    rx_begin_at: SimTime
    arrive_at: SimTime
    lost: bool


def serialization_time(size_bits: int, bitrate: float) -> float:
    return size_bits / bitrate


class Channel:
    """Shared medium: evaluates connectivity lazily at transmit time from node positions."""

    def __init__(self, engine: Engine, rng: "np.random.Generator", nodes: Sequence["Node"]):
        self.engine = engine
        self.rng = rng
        self.nodes = nodes

    def geometric_neighbors(self, node_id: int, at: Optional[SimTime] = None) -> List[int]:
        """Alive nodes within `node_id`'s transmission range, sorted by id."""
        if at is None:
            at = self.engine.now()
        sender = self.nodes[node_id]
        origin = sender.position_at(at)
        tx_range = sender.radio.tx_range
        return [
            other.id
            for other in self.nodes
            if other.id != node_id and other.alive and in_range(origin, other.position_at(at), tx_range)
        ]

    def link_up(self, src: int, dst: int, at: Optional[SimTime] = None) -> bool:
        if at is None:
            at = self.engine.now()
        sender, receiver = self.nodes[src], self.nodes[dst]
        return receiver.alive and in_range(sender.position_at(at), receiver.position_at(at), sender.radio.tx_range)

    def transmit(self, frame: Frame, at: SimTime) -> List[Delivery]:
        """Schedules the deliveries of one frame; a failed unicast schedules MAC-failure feedback instead."""
        sender = self.nodes[frame.src]
        if not sender.alive:
            return []
        cfg: RadioConfig = sender.radio
        airtime = serialization_time(frame.size_bits, cfg.bitrate)

        if frame.is_broadcast:
            receivers = self.geometric_neighbors(frame.src, at)
        elif self.link_up(frame.src, frame.dst, at):
            receivers = [frame.dst]
        else:
            logger.debug("t=%.6f node %d: unicast %s to %d failed (out of range or dead)",
                         at, frame.src, frame.packet.kind.value, frame.dst)
            if cfg.mac_feedback:
                self.engine.schedule(at, frame.src, EventKind.MAC_FAILURE, frame)
            return []

        deliveries = []
        for receiver in receivers:
            jitter = float(self.rng.uniform(0.0, cfg.proc_jitter_max)) if cfg.proc_jitter_max > 0 else 0.0
            lost = cfg.loss_probability > 0 and float(self.rng.random()) < cfg.loss_probability
            delivery = Delivery(frame, receiver, at + jitter, at + jitter + airtime, lost)
            self.engine.schedule(delivery.rx_begin_at, receiver, EventKind.FRAME_RX_BEGIN, delivery)
            self.engine.schedule(delivery.arrive_at, receiver, EventKind.FRAME_DELIVERY, delivery)
            deliveries.append(delivery)
        return deliveries
