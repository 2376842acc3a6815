import pytest

from urban_sim.engine import Engine, EventKind, RngStreams
from urban_sim.errors import SchedulingError


def _recording_engine():
    engine = Engine()
    fired = []
    for kind in EventKind:
        engine.subscribe(kind, lambda e: fired.append((e.fire_at, e.payload)))
    return engine, fired


def test_events_fire_in_time_order():
    engine, fired = _recording_engine()
    engine.schedule(3.0, 0, EventKind.HELLO_TIMER, "c")
    engine.schedule(1.0, 0, EventKind.HELLO_TIMER, "a")
    engine.schedule(2.0, 0, EventKind.HELLO_TIMER, "b")
    engine.run_until(10.0)
    assert [p for _, p in fired] == ["a", "b", "c"]


def test_equal_times_fire_in_scheduling_order():
    engine, fired = _recording_engine()
    for label in ["first", "second", "third"]:
        engine.schedule(5.0, 0, EventKind.TX_END, label)
    engine.run_until(5.0)
    assert [p for _, p in fired] == ["first", "second", "third"]


def test_cancelled_event_never_fires():
    engine, fired = _recording_engine()
    handle = engine.schedule(1.0, 0, EventKind.IDLE_TIMEOUT, "x")
    engine.schedule(2.0, 0, EventKind.IDLE_TIMEOUT, "y")
    assert engine.cancel(handle) is True
    engine.run_until(3.0)
    assert [p for _, p in fired] == ["y"]


def test_cancel_after_fire_returns_false():
    engine, _ = _recording_engine()
    handle = engine.schedule(1.0, 0, EventKind.IDLE_TIMEOUT)
    engine.run_until(2.0)
    assert engine.cancel(handle) is False
    assert engine.cancel(None) is False


def test_scheduling_in_the_past_raises():
    engine, _ = _recording_engine()
    engine.schedule(2.0, 0, EventKind.HELLO_TIMER)
    engine.run_until(2.0)
    with pytest.raises(SchedulingError):
        engine.schedule(1.0, 0, EventKind.HELLO_TIMER)


def test_run_until_stops_at_end_and_leaves_later_events():
    engine, fired = _recording_engine()
    engine.schedule(1.0, 0, EventKind.HELLO_TIMER, "in")
    engine.schedule(7.0, 0, EventKind.HELLO_TIMER, "out")
    assert engine.run_until(5.0) == 5.0
    assert engine.now() == 5.0
    assert [p for _, p in fired] == ["in"]
    assert engine.pending() == 1


def test_handler_can_schedule_at_current_time():
    engine = Engine()
    order = []

    def on_hello(event):
        order.append("hello")
        engine.schedule(engine.now(), 0, EventKind.TX_END)

    engine.subscribe(EventKind.HELLO_TIMER, on_hello)
    engine.subscribe(EventKind.TX_END, lambda e: order.append("tx_end"))
    engine.schedule(1.0, 0, EventKind.HELLO_TIMER)
    engine.run_until(1.0)
    assert order == ["hello", "tx_end"]


def test_missing_handler_raises():
    engine = Engine()
    engine.schedule(1.0, 0, EventKind.HELLO_TIMER)
    with pytest.raises(KeyError):
        engine.run_until(2.0)


def test_cancel_target_keeps_listed_kinds():
    engine, fired = _recording_engine()
    engine.schedule(1.0, 4, EventKind.HELLO_TIMER, "timer")
    engine.schedule(1.0, 4, EventKind.FRAME_DELIVERY, "frame")
    engine.schedule(1.0, 5, EventKind.HELLO_TIMER, "other")
    cancelled = engine.cancel_target(4, frozenset({EventKind.FRAME_DELIVERY}))
    engine.run_until(2.0)
    assert cancelled == 1
    assert sorted(p for _, p in fired) == ["frame", "other"]


def test_rng_streams_are_reproducible_and_independent():
    a = RngStreams(123)
    b = RngStreams(123)
    assert a.stream("mobility/1").random() == b.stream("mobility/1").random()
    # Drawing from one stream does not shift another
    c = RngStreams(123)
    c.stream("radio").random(100)
    assert c.stream("mobility/1").random() == RngStreams(123).stream("mobility/1").random()
    assert RngStreams(1).stream("x").random() != RngStreams(2).stream("x").random()
