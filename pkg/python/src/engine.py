"""
Deterministic event engine on top of simpy with an integer microsecond clock
"""

from __future__ import annotations

import logging
from enum import IntEnum
from typing import Callable, Generator, Optional

import simpy
from simpy.events import Event

log = logging.getLogger(__name__)

TICKS_PER_SECOND = 1_000_000


def to_ticks(seconds: float) -> int:
    return int(round(seconds * TICKS_PER_SECOND))


def to_seconds(ticks: int) -> float:
    return ticks / TICKS_PER_SECOND


def format_ticks(ticks: int) -> str:
    """Render a tick count as seconds with six fractional digits, exactly"""
    sign = "-" if ticks < 0 else ""
    whole, frac = divmod(abs(ticks), TICKS_PER_SECOND)
    return f"{sign}{whole}.{frac:06d}"


def parse_ticks(text: str) -> int:
    """Inverse of format_ticks; accepts up to six fractional digits"""
    text = text.strip()
    sign = -1 if text.startswith("-") else 1
    whole, _, frac = text.lstrip("+-").partition(".")
    if not whole.isdigit() or (frac and not frac.isdigit()) or len(frac) > 6:
        raise ValueError(f"Invalid time value {text!r}")
    return sign * (int(whole) * TICKS_PER_SECOND + int(frac.ljust(6, "0") or 0))


class Phase(IntEnum):
    """Same-instant ordering; lower runs first"""

    DATA_PLANE = 0
    WATCH = 1
    MONITOR = 2
    LIFECYCLE = 3


# simpy reserves 0 (URGENT) and 1 (NORMAL)
_PRIORITY_BASE = 2


class PhasedTimeout(Event):
    """A timeout scheduled with the priority of its phase"""

    def __init__(self, env: simpy.Environment, delay: int, phase: Phase):
        if delay < 0:
            raise ValueError(f"Negative delay {delay}")
        super().__init__(env)
        self._ok = True
        self._value = None
        env.schedule(self, priority=_PRIORITY_BASE + int(phase), delay=delay)


class Engine:
    def __init__(self):
        self.env = simpy.Environment()

    @property
    def now(self) -> int:
        return int(self.env.now)

    @property
    def now_seconds(self) -> float:
        return to_seconds(self.now)

    def timeout(self, delay: int, phase: Phase) -> PhasedTimeout:
        return PhasedTimeout(self.env, delay, phase)

    def call_at(self, when: int, fn: Callable[[], None], phase: Phase) -> None:
        if when < self.now:
            raise ValueError(f"Cannot schedule at {when}, now is {self.now}")
        self.call_later(when - self.now, fn, phase)

    def call_later(self, delay: int, fn: Callable[[], None], phase: Phase) -> None:
        self.timeout(delay, phase).callbacks.append(lambda _event: fn())

    def every(
        self, period: int, fn: Callable[[], None], phase: Phase, start: int = 0
    ) -> simpy.Process:
        """Run `fn` at start, start + period, ... in the given phase"""
        if period <= 0:
            raise ValueError("period must be > 0")
        return self.env.process(self._periodic(period, fn, phase, start))

    def _periodic(
        self, period: int, fn: Callable[[], None], phase: Phase, start: int
    ) -> Generator[Event, None, None]:
        yield self.timeout(max(0, start - self.now), phase)
        while True:
            fn()
            yield self.timeout(period, phase)

    def seconds_clock(self) -> Callable[[], float]:
        return lambda: self.now_seconds

    def dispatcher(
        self, phase: Phase = Phase.WATCH
    ) -> Callable[[float, Callable[[], None]], None]:
        """Adapter for components that schedule callbacks with a delay in seconds"""
        return lambda delay, fn: self.call_later(to_ticks(delay), fn, phase)

    def run(self, until: Optional[int] = None) -> None:
        """Run through `until` inclusive (every phase at that instant executes)"""
        if until is None:
            self.env.run()
            return
        self.env.run(until=until + 1)
        log.debug("Engine stopped at %s", format_ticks(self.now))
