"""Per-node QoS block: admission control, windowed priority management,
the reservation ledger and the deadline-aware output scheduler.

Levels run from 0 (highest) to ``levels - 1``. The ledger never holds more
than ``eta * capacity`` bits/s; every mutation re-checks that bound.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .engine import Engine, EventHandle, EventKind, SimTime
from .errors import LedgerInvariantError
from .packets import DataHeader, Packet
from .scenario import FlowSpec, QosConfig

logger = logging.getLogger(__name__)

# Relative slack for float comparisons against the utilization cap
_CAP_TOLERANCE = 1e-9


class ReservationLedger:
    """Bandwidth reserved per flow at one node."""

    def __init__(self, capacity: float, eta: float, mode: str = "apriori"):
        self.capacity = capacity
        self.eta = eta
        self.mode = mode
        self.entries: Dict[int, float] = {}

    @property
    def limit(self) -> float:
        return self.eta * self.capacity

    @property
    def reserved_total(self) -> float:
        return sum(self.entries.values())

    @property
    def residual(self) -> float:
        return max(0.0, self.limit - self.reserved_total)

    def __contains__(self, flow_id: int) -> bool:
        return flow_id in self.entries

    def _fits(self, total: float) -> bool:
        return total <= self.limit * (1.0 + _CAP_TOLERANCE)

    def admit(self, flow: FlowSpec) -> bool:
        if flow.flow_id in self.entries:
            return True
        return self._fits(self.reserved_total + flow.rate)

    def reserve(self, flow: FlowSpec) -> float:
        """Books the flow's rate; returns the ledger delta (0 when already reserved)."""
        if flow.flow_id in self.entries:
            return 0.0
        total = self.reserved_total + flow.rate
        if not self._fits(total):
            raise LedgerInvariantError(
                f"reserving {flow.rate} bit/s for flow {flow.flow_id} would bring the ledger to "
                f"{total} bit/s, above the cap of {self.limit} bit/s"
            )
        self.entries[flow.flow_id] = flow.rate
        return flow.rate

    def release(self, flow_id: int) -> float:
        """Removes a reservation; releasing twice is a no-op returning 0."""
        rate = self.entries.pop(flow_id, None)
        if rate is None:
            return 0.0
        return -rate


class PriorityState:
    """Windowed promotion budget and per-level forwarding counts."""

    def __init__(self, levels: int, window: float, promotion_budget: int, demote_factor: float, nominal_hop_delay: float):
        self.levels = levels
        self.window = window
        self.promotion_budget = promotion_budget
        self.demote_factor = demote_factor
        self.nominal_hop_delay = nominal_hop_delay
        self.window_start: SimTime = 0.0
        self.promotions_in_window = 0
        self.forwarded_in_window: Dict[int, int] = {level: 0 for level in range(levels)}

    def _roll(self, now: SimTime) -> None:
        if now < self.window_start + self.window:
            return
        elapsed_windows = math.floor((now - self.window_start) / self.window)
        self.window_start += elapsed_windows * self.window
        self.promotions_in_window = 0
        self.forwarded_in_window = {level: 0 for level in range(self.levels)}

    def clamp(self, level: int) -> int:
        return min(max(level, 0), self.levels - 1)

    def assign(self, level: int, deadline: SimTime, remaining_hops: int, now: SimTime) -> int:
        """Moves a packet at most one level based on its slack against the remaining hops."""
        self._roll(now)
        slack = deadline - now
        need = remaining_hops * self.nominal_hop_delay
        if slack < need:
            if level > 0 and self.promotions_in_window < self.promotion_budget:
                self.promotions_in_window += 1
                return level - 1
            return self.clamp(level)
        if slack > self.demote_factor * need:
            return self.clamp(level + 1)
        return self.clamp(level)

    def count_forwarded(self, level: int, now: SimTime) -> None:
        self._roll(now)
        self.forwarded_in_window[level] += 1


@dataclass(order=True)
class _Queued:
    deadline: float
    seq: int
    packet: Packet = field(compare=False)


class PriorityScheduler:
    """Strict priority across levels, earliest deadline first within a level."""

    def __init__(self, levels: int, capacity: int, miss_drop: bool = True):
        self.capacity = capacity
        self.miss_drop = miss_drop
        self._heaps: List[List[_Queued]] = [[] for _ in range(levels)]
        self._seq = 0

    def __len__(self) -> int:
        return sum(len(heap) for heap in self._heaps)

    def level_size(self, level: int) -> int:
        return len(self._heaps[level])

    def enqueue(self, packet: Packet, level: int) -> bool:
        """False when the level is full; the incoming packet (the newest) is the one dropped."""
        heap = self._heaps[level]
        if len(heap) >= self.capacity:
            return False
        header: DataHeader = packet.body
        heapq.heappush(heap, _Queued(header.deadline, self._seq, packet))
        self._seq += 1
        return True

    def dequeue(self, now: SimTime) -> Tuple[Optional[Packet], int, List[Packet]]:
        """Returns (next packet or None, its level, packets dropped as expired on the way)."""
        expired: List[Packet] = []
        for level, heap in enumerate(self._heaps):
            while heap:
                item = heapq.heappop(heap)
                if self.miss_drop and item.deadline < now:
                    expired.append(item.packet)
                    continue
                return item.packet, level, expired
        return None, -1, expired

    def drain(self) -> List[Packet]:
        packets = [item.packet for heap in self._heaps for item in heap]
        self._heaps = [[] for _ in self._heaps]
        return packets


class QosManager:
    """One node's QoS block, wired to the engine for reservation timers."""

    def __init__(self, node_id: int, cfg: QosConfig, engine: Engine, nominal_serialization: float):
        self.node_id = node_id
        self.cfg = cfg
        self.engine = engine
        self.nominal_serialization = nominal_serialization
        self.ledger = ReservationLedger(cfg.capacity_bps, cfg.eta, cfg.reservation_mode)
        self.priority = PriorityState(
            cfg.levels, cfg.window, cfg.promotion_budget, cfg.demote_factor, cfg.nominal_hop_delay
        )
        self.scheduler = PriorityScheduler(cfg.levels, cfg.queue_capacity, cfg.miss_drop)
        self._rejected_until: Dict[int, SimTime] = {}
        self._last_used: Dict[int, SimTime] = {}
        self._idle_handles: Dict[int, EventHandle] = {}
        self._expire_handles: Dict[int, EventHandle] = {}
        self.admitted = 0
        self.rejected = 0
        self.queue_drops = 0
        self.deadline_misses = 0

    # --- Admission and reservation ---

    def admit(self, flow: FlowSpec) -> bool:
        now = self.engine.now()
        if flow.flow_id in self.ledger:
            return True
        if now < self._rejected_until.get(flow.flow_id, -math.inf):
            return False
        if self.ledger.admit(flow):
            self.admitted += 1
            return True
        self.rejected += 1
        self._rejected_until[flow.flow_id] = now + self.cfg.retry_backoff
        logger.debug("t=%.6f node %d rejects flow %d (%.0f of %.0f bit/s reserved)",
                     now, self.node_id, flow.flow_id, self.ledger.reserved_total, self.ledger.limit)
        return False

    def reserve(self, flow: FlowSpec) -> float:
        delta = self.ledger.reserve(flow)
        if delta:
            now = self.engine.now()
            self._last_used[flow.flow_id] = now
            if flow.stop > now and flow.flow_id not in self._expire_handles:
                self._expire_handles[flow.flow_id] = self.engine.schedule(
                    flow.stop, self.node_id, EventKind.RESERVATION_EXPIRE, flow.flow_id
                )
            self._arm_idle(flow.flow_id)
        return delta

    def release(self, flow_id: int) -> float:
        delta = self.ledger.release(flow_id)
        self.engine.cancel(self._idle_handles.pop(flow_id, None))
        self.engine.cancel(self._expire_handles.pop(flow_id, None))
        self._last_used.pop(flow_id, None)
        return delta

    def ensure_reservation(self, flow: FlowSpec) -> bool:
        """Reservation check on a transmitting hop; False means the packet must be discarded."""
        now = self.engine.now()
        if now >= flow.stop:
            return True
        if flow.flow_id in self.ledger:
            self._last_used[flow.flow_id] = now
            return True
        if not self.admit(flow):
            return False
        self.reserve(flow)
        return True

    def _arm_idle(self, flow_id: int) -> None:
        at = self._last_used[flow_id] + self.cfg.reservation_idle_timeout
        self._idle_handles[flow_id] = self.engine.schedule(at, self.node_id, EventKind.RESERVATION_IDLE, flow_id)

    def on_reservation_idle(self, flow_id: int) -> float:
        self._idle_handles.pop(flow_id, None)
        last = self._last_used.get(flow_id)
        if last is None or flow_id not in self.ledger:
            return 0.0
        if self.engine.now() - last >= self.cfg.reservation_idle_timeout:
            return self.release(flow_id)
        self._arm_idle(flow_id)
        return 0.0

    def on_reservation_expire(self, flow_id: int) -> float:
        self._expire_handles.pop(flow_id, None)
        return self.release(flow_id)

    # --- Priority and scheduling ---

    def initial_priority(self, flow: FlowSpec) -> int:
        return flow.priority if flow.priority is not None else self.cfg.levels // 2

    def assign_priority(self, header: DataHeader) -> int:
        header.priority = self.priority.assign(
            header.priority, header.deadline, header.remaining_hops, self.engine.now()
        )
        return header.priority

    def enqueue(self, packet: Packet) -> bool:
        accepted = self.scheduler.enqueue(packet, packet.body.priority)
        if not accepted:
            self.queue_drops += 1
        return accepted

    def dequeue(self) -> Tuple[Optional[Packet], List[Packet]]:
        now = self.engine.now()
        packet, level, expired = self.scheduler.dequeue(now)
        self.deadline_misses += len(expired)
        if packet is not None:
            self.priority.count_forwarded(level, now)
        return packet, expired

    def queue_delay_estimate(self) -> float:
        return len(self.scheduler) * self.nominal_serialization

    def release_all(self) -> None:
        for flow_id in list(self.ledger.entries):
            self.release(flow_id)
