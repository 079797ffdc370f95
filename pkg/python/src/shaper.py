"""
Token-bucket traffic shaper: address/port filters plus fluid per-class buckets
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

log = logging.getLogger(__name__)

DEFAULT_BURST_SECONDS = 0.1
# Fixed filter priority used for per-pipe rules installed by the executor
RULE_PRIORITY = 10


class ShaperError(Exception):
    """Base class for shaper errors"""


class InvalidRate(ShaperError):
    pass


class NoSuchClass(ShaperError):
    pass


class NoSuchFilter(ShaperError):
    pass


class DuplicateFilter(ShaperError):
    pass


def _check_port(port: int) -> None:
    if not isinstance(port, int) or not 1 <= port <= 65535:
        raise ValueError(f"Port out of range: {port!r}")


def _check_host(host: str) -> None:
    if not host or any(c in host for c in " :>"):
        raise ValueError(f"Invalid host name: {host!r}")


@dataclass(frozen=True, order=True)
class PipeKey:
    """Identity of one container -> DataNode TCP subpipe"""

    src_host: str
    src_port: int
    dst_host: str
    dst_port: int

    def __post_init__(self):
        _check_host(self.src_host)
        _check_host(self.dst_host)
        _check_port(self.src_port)
        _check_port(self.dst_port)

    def render(self) -> str:
        return f"{self.src_host}:{self.src_port}->{self.dst_host}:{self.dst_port}"

    def __str__(self) -> str:
        return self.render()

    @classmethod
    def parse(cls, text: str) -> "PipeKey":
        try:
            src, dst = text.split("->")
            src_host, src_port = src.rsplit(":", 1)
            dst_host, dst_port = dst.rsplit(":", 1)
            return cls(src_host, int(src_port), dst_host, int(dst_port))
        except ValueError as e:
            raise ValueError(f"Invalid pipe rendering {text!r}: {e}")


@dataclass(frozen=True)
class KeyPattern:
    """PipeKey pattern; a field set to None is a wildcard"""

    src_host: Optional[str] = None
    src_port: Optional[int] = None
    dst_host: Optional[str] = None
    dst_port: Optional[int] = None

    def __post_init__(self):
        for host in (self.src_host, self.dst_host):
            if host is not None:
                _check_host(host)
        for port in (self.src_port, self.dst_port):
            if port is not None:
                _check_port(port)

    @classmethod
    def exact(cls, key: PipeKey) -> "KeyPattern":
        return cls(key.src_host, key.src_port, key.dst_host, key.dst_port)

    def _fields(self) -> Tuple:
        return (self.src_host, self.src_port, self.dst_host, self.dst_port)

    def matches(self, key: PipeKey) -> bool:
        wanted = (key.src_host, key.src_port, key.dst_host, key.dst_port)
        return all(p is None or p == k for p, k in zip(self._fields(), wanted))

    @property
    def exact_fields(self) -> int:
        return sum(f is not None for f in self._fields())

    def render(self) -> str:
        sh, sp, dh, dp = ("*" if f is None else str(f) for f in self._fields())
        return f"{sh}:{sp}->{dh}:{dp}"

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Filter:
    pattern: KeyPattern
    class_id: str
    priority: int


@dataclass
class ShapeClass:
    """A token bucket; tokens are wire bytes"""

    class_id: str
    rate: float
    burst: float
    tokens: float
    last_refill: float

    def refill(self, now: float) -> None:
        if now < self.last_refill:
            raise ValueError(
                f"Refill at {now} precedes last refill {self.last_refill}"
            )
        elapsed = now - self.last_refill
        self.tokens = min(self.burst, self.tokens + self.rate * elapsed)
        self.last_refill = now


def default_burst(rate: float) -> float:
    return rate * DEFAULT_BURST_SECONDS


class TrafficShaper:
    """
    Traffic control table for one DataNode host.

    Classification picks, among matching filters, the lowest priority value,
    then the most exact pattern, then the lexicographically smallest pattern
    rendering. Unclassified traffic (`classify` returns None) is never
    limited.
    """

    def __init__(self, name: str = "", overhead_factor: float = 1.0):
        if overhead_factor <= 0:
            raise ValueError("overhead_factor must be > 0")
        self.name = name
        self.overhead_factor = overhead_factor
        self._classes: Dict[str, ShapeClass] = {}
        self._filters: Dict[Tuple[KeyPattern, str], Filter] = {}

    def configure_class(
        self, class_id: str, rate: float, burst: float, now: Optional[float] = None
    ) -> None:
        if rate <= 0 or burst <= 0:
            raise InvalidRate(f"rate={rate} burst={burst}")
        existing = self._classes.get(class_id)
        if existing is None:
            self._classes[class_id] = ShapeClass(
                class_id=class_id,
                rate=rate,
                burst=burst,
                tokens=burst,
                last_refill=now if now is not None else 0.0,
            )
            log.debug(
                "[%s] class %s created rate=%s burst=%s",
                self.name,
                class_id,
                rate,
                burst,
            )
            return
        if now is not None and now >= existing.last_refill:
            existing.refill(now)
        existing.rate = rate
        existing.burst = burst
        existing.tokens = min(existing.tokens, burst)
        log.debug(
            "[%s] class %s updated rate=%s burst=%s", self.name, class_id, rate, burst
        )

    def add_filter(self, pattern: KeyPattern, class_id: str, priority: int) -> None:
        if class_id not in self._classes:
            raise NoSuchClass(class_id)
        if (pattern, class_id) in self._filters:
            raise DuplicateFilter(f"{pattern} -> {class_id}")
        self._filters[(pattern, class_id)] = Filter(pattern, class_id, priority)

    def remove_filter(self, pattern: KeyPattern, class_id: str) -> None:
        if self._filters.pop((pattern, class_id), None) is None:
            raise NoSuchFilter(f"{pattern} -> {class_id}")

    def remove_class(self, class_id: str) -> None:
        if self._classes.pop(class_id, None) is None:
            raise NoSuchClass(class_id)
        for key in [k for k in self._filters if k[1] == class_id]:
            del self._filters[key]

    def classify(self, key: PipeKey) -> Optional[str]:
        matching = [f for f in self._filters.values() if f.pattern.matches(key)]
        if not matching:
            return None
        best = min(
            matching,
            key=lambda f: (
                f.priority,
                -f.pattern.exact_fields,
                f.pattern.render(),
                f.class_id,
            ),
        )
        return best.class_id

    def grant(self, class_id: Optional[str], requested: float, now: float) -> float:
        """
        Take up to `requested` payload bytes from the class bucket at time `now`.

        Returns the granted byte count; `requested` itself for unclassified
        traffic.
        """
        if requested < 0:
            raise ValueError(f"requested must be >= 0, got {requested}")
        if class_id is None:
            return requested
        shape = self._classes.get(class_id)
        if shape is None:
            raise NoSuchClass(class_id)
        shape.refill(now)
        wire = min(requested * self.overhead_factor, shape.tokens)
        shape.tokens -= wire
        return wire / self.overhead_factor

    def get_class(self, class_id: str) -> ShapeClass:
        shape = self._classes.get(class_id)
        if shape is None:
            raise NoSuchClass(class_id)
        return shape

    def classes(self) -> List[str]:
        return sorted(self._classes)

    def filters(self) -> List[Filter]:
        return sorted(
            self._filters.values(),
            key=lambda f: (f.priority, f.pattern.render(), f.class_id),
        )
