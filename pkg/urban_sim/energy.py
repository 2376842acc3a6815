"""Energy management: the four-state machine, per-state power accounting,
battery depletion and transmit power versus range.

State rule, applied after every trigger:

- Transmit while a transmission is in progress;
- otherwise Receive while a reception is in progress;
- otherwise the base state: Roaming while the node moves, else Receive
  (awake and listening) until `idle_timeout` passes without traffic, then Sleep.

Sleep is the initial state. Energy for the outgoing state is always accrued
before the state changes.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional

from .engine import Engine, EventHandle, EventKind, SimTime
from .scenario import PowerProfile, RangeConfig

logger = logging.getLogger(__name__)


class EnergyState(str, Enum):
    SLEEP = "sleep"
    TRANSMIT = "transmit"
    RECEIVE = "receive"
    ROAMING = "roaming"


class Trigger(str, Enum):
    TX_BEGIN = "tx_begin"
    TX_END = "tx_end"
    RX_BEGIN = "rx_begin"
    RX_END = "rx_end"
    MOVE_START = "move_start"
    MOVE_STOP = "move_stop"
    IDLE_TIMEOUT = "idle_timeout"


_GOES_IDLE = (Trigger.TX_END, Trigger.RX_END, Trigger.MOVE_STOP)


def tx_power_for_range(cfg: RangeConfig, r: float) -> float:
    """Transmit draw needed to reach `r` meters: p_elec + k * r^alpha."""
    if r <= 0:
        raise ValueError("range must be positive")
    return cfg.p_elec + cfg.k * r ** cfg.alpha


def _zero_per_state() -> Dict[EnergyState, float]:
    return {state: 0.0 for state in EnergyState}


@dataclass
class EnergyAccount:
    profile: PowerProfile
    initial_battery: float
    battery_joules: float = -1.0
    state: EnergyState = EnergyState.SLEEP
    state_entered_at: SimTime = 0.0
    consumed_per_state: Dict[EnergyState, float] = field(default_factory=_zero_per_state)
    occupancy_per_state: Dict[EnergyState, float] = field(default_factory=_zero_per_state)
    moving: bool = False
    tx_active: int = 0
    rx_active: int = 0
    last_activity_at: SimTime = 0.0
    transmit_power: Optional[float] = None
    death_time: Optional[SimTime] = None
    failure_discarded_j: float = 0.0
    accrued_until: SimTime = 0.0

    def __post_init__(self) -> None:
        if self.battery_joules < 0:
            self.battery_joules = self.initial_battery

    @property
    def dead(self) -> bool:
        return self.death_time is not None

    @property
    def consumed_total(self) -> float:
        return sum(self.consumed_per_state.values())

    @property
    def idle(self) -> bool:
        return self.tx_active == 0 and self.rx_active == 0 and not self.moving

    def power(self, state: Optional[EnergyState] = None) -> float:
        state = state or self.state
        if state is EnergyState.TRANSMIT:
            return self.transmit_power if self.transmit_power is not None else self.profile.p_transmit
        if state is EnergyState.RECEIVE:
            return self.profile.p_receive
        if state is EnergyState.ROAMING:
            return self.profile.p_roaming
        return self.profile.p_sleep

    def accrue(self, now: SimTime) -> float:
        """Charges the current state's draw since the last accrual; returns joules consumed."""
        elapsed = now - self.accrued_until
        if self.dead or elapsed <= 0:
            return 0.0
        p = self.power()
        needed = p * elapsed
        if needed >= self.battery_joules:
            used = self.battery_joules
            occupied = used / p if p > 0 else elapsed
            self.battery_joules = 0.0
            self.death_time = self.accrued_until + occupied
        else:
            used = needed
            occupied = elapsed
            self.battery_joules -= needed
        self.consumed_per_state[self.state] += used
        self.occupancy_per_state[self.state] += occupied
        self.accrued_until = now
        return used

    def drain(self, now: SimTime) -> None:
        """Books the last crumbs of charge at the predicted depletion instant."""
        self.accrue(now)
        if not self.dead:
            self.consumed_per_state[self.state] += self.battery_joules
            self.battery_joules = 0.0
            self.death_time = now

    def fail(self, now: SimTime) -> None:
        """Injected node failure: the remaining charge is discarded, not consumed."""
        self.accrue(now)
        if not self.dead:
            self.failure_discarded_j = self.battery_joules
            self.battery_joules = 0.0
            self.death_time = now

    def _set_state(self, new_state: EnergyState, now: SimTime) -> None:
        if new_state is not self.state:
            self.state = new_state
            self.state_entered_at = now

    def transition(self, trigger: Trigger, now: SimTime) -> EnergyState:
        """Applies one trigger to the state machine and returns the resulting state."""
        if self.dead:
            logger.debug("t=%.6f ignoring %s on a dead node", now, trigger.value)
            return self.state
        self.accrue(now)
        if self.dead:
            return self.state

        if trigger is Trigger.TX_BEGIN:
            self.tx_active += 1
            self.last_activity_at = now
        elif trigger is Trigger.TX_END:
            self.tx_active = max(0, self.tx_active - 1)
            self.transmit_power = None
            self.last_activity_at = now
        elif trigger is Trigger.RX_BEGIN:
            self.rx_active += 1
            self.last_activity_at = now
        elif trigger is Trigger.RX_END:
            self.rx_active = max(0, self.rx_active - 1)
            self.last_activity_at = now
        elif trigger is Trigger.MOVE_START:
            self.moving = True
        elif trigger is Trigger.MOVE_STOP:
            self.moving = False
        elif trigger is Trigger.IDLE_TIMEOUT:
            if self.idle and now - self.last_activity_at >= self.profile.idle_timeout - 1e-12:
                self._set_state(EnergyState.SLEEP, now)
            return self.state

        if self.tx_active:
            new_state = EnergyState.TRANSMIT
        elif self.rx_active:
            new_state = EnergyState.RECEIVE
        elif self.moving:
            new_state = EnergyState.ROAMING
        elif trigger in _GOES_IDLE:
            new_state = EnergyState.RECEIVE
        else:
            new_state = self.state
        self._set_state(new_state, now)
        return self.state


class EnergyManager:
    """Engine glue for one node's EnergyAccount: idle and depletion timers."""

    def __init__(
        self,
        node_id: int,
        account: EnergyAccount,
        engine: Engine,
        on_death: Callable[[SimTime], None],
        on_state_change: Optional[Callable[[EnergyState, EnergyState], None]] = None,
    ):
        self.node_id = node_id
        self.account = account
        self.engine = engine
        self.on_death = on_death
        self.on_state_change = on_state_change
        self._idle_handle: Optional[EventHandle] = None
        self._depletion_handle: Optional[EventHandle] = None

    @property
    def alive(self) -> bool:
        return not self.account.dead

    def start(self) -> None:
        self._reschedule_depletion()

    def trigger(self, trigger: Trigger, tx_power: Optional[float] = None) -> EnergyState:
        account = self.account
        now = self.engine.now()
        if account.dead:
            logger.debug("t=%.6f node %d: %s ignored, node is dead", now, self.node_id, trigger.value)
            return account.state
        previous = account.state
        if trigger is Trigger.TX_BEGIN and tx_power is not None:
            account.accrue(now)
            account.transmit_power = tx_power
        state = account.transition(trigger, now)
        if account.dead:
            self._died()
            return state
        if trigger in _GOES_IDLE and account.idle:
            self.engine.cancel(self._idle_handle)
            self._idle_handle = self.engine.schedule(
                now + account.profile.idle_timeout, self.node_id, EventKind.IDLE_TIMEOUT, None
            )
        if state is not previous and self.on_state_change is not None:
            self.on_state_change(previous, state)
        self._reschedule_depletion()
        return state

    def on_idle_timeout(self) -> None:
        self._idle_handle = None
        self.trigger(Trigger.IDLE_TIMEOUT)

    def on_depleted(self) -> None:
        self._depletion_handle = None
        if self.account.dead:
            return
        self.account.drain(self.engine.now())
        self._died()

    def fail(self) -> None:
        if self.account.dead:
            return
        self.account.fail(self.engine.now())
        self._died()

    def finalize(self, now: SimTime) -> None:
        self.account.accrue(now)
        if self.account.dead and self._depletion_handle is not None:
            self._died()

    def _reschedule_depletion(self) -> None:
        self.engine.cancel(self._depletion_handle)
        self._depletion_handle = None
        p = self.account.power()
        if p > 0:
            at = self.engine.now() + self.account.battery_joules / p
            self._depletion_handle = self.engine.schedule(at, self.node_id, EventKind.BATTERY_DEPLETED, None)

    def _died(self) -> None:
        self.engine.cancel(self._idle_handle)
        self.engine.cancel(self._depletion_handle)
        self._idle_handle = self._depletion_handle = None
        logger.info("node %d died at t=%.6f", self.node_id, self.account.death_time)
        self.on_death(self.account.death_time)
