"""Per-node mobility manager.

The manager follows exactly one mobility model, picks each leg's
destination and speed, answers position queries by interpolating along the
active leg, and signals movement starts/stops to the energy and routing
modules. Positions are sampled on demand; there is no tick.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Dict, Optional, Type, Union

from .engine import Engine, EventKind, SimTime
from .radio import Position
from .scenario import AreaConfig, MobilityModelConfig

if TYPE_CHECKING:
    import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MovementLeg:
    origin: Position
    to: Position
    speed: float
    depart_at: SimTime

    @property
    def duration(self) -> float:
        return self.origin.distance_to(self.to) / self.speed

    @property
    def arrive_at(self) -> SimTime:
        return self.depart_at + self.duration

    def position_at(self, t: SimTime) -> Position:
        duration = self.duration
        if duration <= 0 or t >= self.depart_at + duration:
            return self.to
        if t <= self.depart_at:
            return self.origin
        f = (t - self.depart_at) / duration
        return Position(
            _between(self.origin.x + (self.to.x - self.origin.x) * f, self.origin.x, self.to.x),
            _between(self.origin.y + (self.to.y - self.origin.y) * f, self.origin.y, self.to.y),
        )


def _between(value: float, a: float, b: float) -> float:
    # Interpolation rounding must not leave the segment (and hence the area)
    return min(max(value, min(a, b)), max(a, b))


@dataclass(frozen=True)
class Pause:
    at: Position
    start: SimTime
    until: SimTime


Segment = Union[MovementLeg, Pause]


# --- Models ---

class MobilityModel:
    """Chooses the next leg for a node; None means the node stays put."""

    def __init__(self, cfg: MobilityModelConfig, area: AreaConfig):
        self.cfg = cfg
        self.area = area

    def next_leg(self, origin: Position, now: SimTime, rng: "np.random.Generator") -> Optional[MovementLeg]:
        raise NotImplementedError


class StaticModel(MobilityModel):
    def next_leg(self, origin, now, rng):
        return None


class RandomWaypointModel(MobilityModel):
    def next_leg(self, origin, now, rng):
        to = Position(float(rng.uniform(0.0, self.area.width_m)), float(rng.uniform(0.0, self.area.height_m)))
        if self.cfg.v_min == self.cfg.v_max:
            speed = self.cfg.v_min
        else:
            speed = float(rng.uniform(self.cfg.v_min, self.cfg.v_max))
        return MovementLeg(origin, to, speed, now)


MODEL_REGISTRY: Dict[str, Type[MobilityModel]] = {
    "static": StaticModel,
    "random_waypoint": RandomWaypointModel,
}


class MobilityManager:
    """Drives one node's movement under a single mobility model."""

    def __init__(
        self,
        node_id: int,
        cfg: MobilityModelConfig,
        area: AreaConfig,
        initial: Position,
        rng: "np.random.Generator",
        engine: Engine,
        on_motion: Optional[Callable[[bool], None]] = None,
    ):
        self.node_id = node_id
        self.cfg = cfg
        self.model = MODEL_REGISTRY[cfg.kind](cfg, area)
        self.rng = rng
        self.engine = engine
        self.on_motion = on_motion
        self.segment: Segment = Pause(initial, 0.0, float("inf"))
        self.moving = False
        self.legs_started = 0
        self._frozen: Optional[Position] = None

    # --- Operations ---

    def next_leg(self) -> Optional[MovementLeg]:
        return self.model.next_leg(self.position_at(self.engine.now()), self.engine.now(), self.rng)

    def position_at(self, t: SimTime) -> Position:
        if self._frozen is not None:
            return self._frozen
        segment = self.segment
        if isinstance(segment, MovementLeg):
            return segment.position_at(t)
        return segment.at

    def notify_motion(self, moving: bool) -> None:
        if moving == self.moving:
            return
        self.moving = moving
        if self.on_motion is not None:
            self.on_motion(moving)

    # --- Event-driven lifecycle ---

    def start(self) -> None:
        self.depart()

    def depart(self) -> None:
        leg = self.next_leg()
        if leg is None:
            return
        self.segment = leg
        self.legs_started += 1
        logger.debug("t=%.6f node %d departs to (%.1f, %.1f) at %.2f m/s",
                     leg.depart_at, self.node_id, leg.to.x, leg.to.y, leg.speed)
        self.notify_motion(True)
        self.engine.schedule(leg.arrive_at, self.node_id, EventKind.MOBILITY_ARRIVE, leg)

    def arrive(self) -> None:
        leg = self.segment
        if not isinstance(leg, MovementLeg):
            return
        now = self.engine.now()
        self.segment = Pause(leg.to, now, now + self.cfg.pause)
        self.notify_motion(False)
        self.engine.schedule(now + self.cfg.pause, self.node_id, EventKind.MOBILITY_DEPART, None)

    def freeze(self, t: SimTime) -> None:
        """Pins the node where it is at `t` (used at node death)."""
        self._frozen = self.position_at(t)
        self.moving = False
