"""Deterministic discrete-event engine: virtual clock, ordered event queue, seeded random streams."""

import hashlib
import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, FrozenSet, List, Optional

import numpy as np

from .errors import SchedulingError

logger = logging.getLogger(__name__)

# Virtual time in seconds
SimTime = float

GLOBAL = -1


class EventKind(str, Enum):
    HELLO_TIMER = "hello_timer"
    FRAME_RX_BEGIN = "frame_rx_begin"
    FRAME_DELIVERY = "frame_delivery"
    TX_END = "tx_end"
    MAC_FAILURE = "mac_failure"
    MOBILITY_DEPART = "mobility_depart"
    MOBILITY_ARRIVE = "mobility_arrive"
    IDLE_TIMEOUT = "idle_timeout"
    BATTERY_DEPLETED = "battery_depleted"
    NODE_FAILURE = "node_failure"
    DISCOVERY_TIMEOUT = "discovery_timeout"
    REPLY_WINDOW = "reply_window"
    REPAIR_TIMEOUT = "repair_timeout"
    PACKET_CREATE = "packet_create"
    RESERVATION_EXPIRE = "reservation_expire"
    RESERVATION_IDLE = "reservation_idle"


@dataclass(order=True)
class Event:
    fire_at: SimTime
    seq: int
    target: int = field(compare=False)
    kind: EventKind = field(compare=False)
    payload: Any = field(default=None, compare=False)
    cancelled: bool = field(default=False, compare=False)
    fired: bool = field(default=False, compare=False)


# The event object doubles as its own cancellation handle
EventHandle = Event

Handler = Callable[[Event], None]


class Engine:
    """Single-threaded event loop ordered by (fire_at, seq)."""

    def __init__(self) -> None:
        self._queue: List[Event] = []
        self._seq = 0
        self._now: SimTime = 0.0
        self._handlers: Dict[EventKind, Handler] = {}
        self.dispatched = 0

    def now(self) -> SimTime:
        return self._now

    def subscribe(self, kind: EventKind, handler: Handler) -> None:
        self._handlers[kind] = handler

    def schedule(self, fire_at: SimTime, target: int, kind: EventKind, payload: Any = None) -> EventHandle:
        """Enqueues an event; equal timestamps dispatch in scheduling order."""
        if fire_at < self._now:
            raise SchedulingError(
                f"cannot schedule {kind.value} at t={fire_at!r}: clock is already at t={self._now!r}"
            )
        event = Event(fire_at, self._seq, target, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def cancel(self, handle: Optional[EventHandle]) -> bool:
        """True if the event was pending and is now removed."""
        if handle is None or handle.cancelled or handle.fired:
            return False
        handle.cancelled = True
        return True

    def cancel_target(self, target: int, keep_kinds: FrozenSet[EventKind] = frozenset()) -> int:
        """Cancels all pending events addressed to `target` except `keep_kinds`."""
        count = 0
        for event in self._queue:
            if event.target == target and event.kind not in keep_kinds and self.cancel(event):
                count += 1
        return count

    def pending(self) -> int:
        return sum(1 for e in self._queue if not e.cancelled)

    def run_until(self, end: SimTime) -> SimTime:
        """Dispatches every event with fire_at <= end; leaves the clock at `end`."""
        if end < self._now:
            raise SchedulingError(f"run_until({end!r}) is before the clock ({self._now!r})")
        queue = self._queue
        while queue and queue[0].fire_at <= end:
            event = heapq.heappop(queue)
            if event.cancelled:
                continue
            self._now = event.fire_at
            event.fired = True
            handler = self._handlers.get(event.kind)
            if handler is None:
                raise KeyError(f"no handler subscribed for event kind {event.kind.value}")
            self.dispatched += 1
            handler(event)
        self._now = end
        return self._now


# --- Random streams ---

def _label_key(label: str) -> int:
    # Stable across processes, unlike hash()
    return int(hashlib.md5(label.encode("utf-8")).hexdigest()[:8], 16)


class RngStreams:
    """One numpy Generator per named stream, all derived from the scenario seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def stream(self, label: str) -> np.random.Generator:
        gen = self._streams.get(label)
        if gen is None:
            seq = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, _label_key(label)])
            gen = np.random.default_rng(seq)
            self._streams[label] = gen
        return gen
