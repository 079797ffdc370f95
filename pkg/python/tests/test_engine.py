"""Tests for the event engine"""

import pytest

from src.engine import (
    Engine,
    Phase,
    format_ticks,
    parse_ticks,
    to_seconds,
    to_ticks,
)


def test_tick_conversion():
    assert to_ticks(1.1) == 1_100_000
    assert to_ticks(0.01) == 10_000
    assert to_seconds(650_000) == pytest.approx(0.65)


@pytest.mark.parametrize(
    "ticks, text",
    [(0, "0.000000"), (1_100_000, "1.100000"), (10_000, "0.010000"), (-1, "-0.000001")],
)
def test_format_ticks(ticks, text):
    assert format_ticks(ticks) == text
    assert parse_ticks(text) == ticks


def test_parse_ticks_short_fraction():
    assert parse_ticks("2.5") == 2_500_000
    assert parse_ticks("3") == 3_000_000


@pytest.mark.parametrize("text", ["", "abc", "1.1234567", "1.x"])
def test_parse_ticks_invalid(text):
    with pytest.raises(ValueError):
        parse_ticks(text)


def test_same_instant_runs_in_phase_order():
    """Test callbacks at one instant run in phase order"""
    engine = Engine()
    order = []
    engine.call_at(5, lambda: order.append("lifecycle"), Phase.LIFECYCLE)
    engine.call_at(5, lambda: order.append("monitor"), Phase.MONITOR)
    engine.call_at(5, lambda: order.append("watch"), Phase.WATCH)
    engine.call_at(5, lambda: order.append("data"), Phase.DATA_PLANE)
    engine.run(until=10)
    assert order == ["data", "watch", "monitor", "lifecycle"]


def test_same_phase_keeps_scheduling_order():
    """Test ties within a phase keep scheduling order"""
    engine = Engine()
    order = []
    for name in "abc":
        engine.call_at(3, lambda name=name: order.append(name), Phase.WATCH)
    engine.run(until=3)
    assert order == ["a", "b", "c"]


def test_every_runs_at_start_and_each_period():
    """Test periodic callbacks"""
    engine = Engine()
    seen = []
    engine.every(100, lambda: seen.append(engine.now), Phase.MONITOR, start=50)
    engine.run(until=350)
    assert seen == [50, 150, 250, 350]


def test_run_end_is_inclusive_for_every_phase():
    """Test callbacks at the end instant still run"""
    engine = Engine()
    seen = []
    engine.call_at(10, lambda: seen.append("data"), Phase.DATA_PLANE)
    engine.call_at(10, lambda: seen.append("lifecycle"), Phase.LIFECYCLE)
    engine.call_at(11, lambda: seen.append("late"), Phase.DATA_PLANE)
    engine.run(until=10)
    assert seen == ["data", "lifecycle"]


def test_callbacks_scheduled_for_now_in_a_later_phase_run_this_instant():
    engine = Engine()
    seen = []

    def first():
        engine.call_at(
            engine.now, lambda: seen.append(("second", engine.now)), Phase.LIFECYCLE
        )
        seen.append(("first", engine.now))

    engine.call_at(7, first, Phase.DATA_PLANE)
    engine.run(until=7)
    assert seen == [("first", 7), ("second", 7)]


def test_dispatcher_converts_seconds():
    """Test dispatcher delays are given in seconds"""
    engine = Engine()
    seen = []
    engine.dispatcher(Phase.WATCH)(0.01, lambda: seen.append(engine.now))
    engine.run(until=20_000)
    assert seen == [10_000]
    assert engine.seconds_clock()() == pytest.approx(0.020001)


def test_scheduling_in_the_past_is_rejected():
    """Test scheduling before now raises"""
    engine = Engine()
    engine.run(until=10)
    with pytest.raises(ValueError):
        engine.call_at(5, lambda: None, Phase.WATCH)
    with pytest.raises(ValueError):
        engine.every(0, lambda: None, Phase.WATCH)
