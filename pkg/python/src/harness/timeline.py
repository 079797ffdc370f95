"""
Uncontrolled-period timeline: how long each shaped pipe runs before its rate
limit is observable, split into detection, store and enforcement components.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional

from ..engine import format_ticks
from ..shaper import PipeKey
from .errors import HarnessError
from .metrics import PipeRecord, ThroughputSample

TIMELINE_HEADER = ["pipe", "container_id", "t1", "t2", "t3", "t4", "t5", "T"]
T5_THRESHOLD = 1.05


class PipeNeverControlled(HarnessError):
    """Reported (not raised) for a shaped pipe whose limit never took effect"""

    def __init__(self, pipe: PipeKey, container_id: str, reason: str):
        super().__init__(f"{pipe} ({container_id}): {reason}")
        self.pipe = pipe
        self.container_id = container_id
        self.reason = reason


@dataclass(frozen=True)
class TimelineRecord:
    """Components in ticks; T is their exact sum"""

    pipe: PipeKey
    container_id: str
    t1: int
    t2: int
    t3: int
    t4: int
    t5: int

    @property
    def T(self) -> int:
        return self.t1 + self.t2 + self.t3 + self.t4 + self.t5


@dataclass
class TimelineResult:
    records: List[TimelineRecord] = field(default_factory=list)
    uncontrolled: List[PipeNeverControlled] = field(default_factory=list)


def _first_tick_after(opened: int, poll_interval: int) -> int:
    # Ticks run at 0, P, 2P, ... and precede pipe opens at the same instant
    return (opened // poll_interval + 1) * poll_interval


def _t5(samples: List[ThroughputSample], applied: int, limit: float) -> Optional[int]:
    before = [s for s in samples if s.time <= applied]
    if before and before[-1].rate <= limit:
        return 0
    for s in samples:
        if s.time > applied and s.rate <= limit:
            return s.time - applied
    return None


def measure_timeline(
    pipes: Iterable[PipeRecord],
    samples: Iterable[ThroughputSample],
    detections: Mapping[PipeKey, int],
    writes: Mapping[PipeKey, int],
    applications: Mapping[PipeKey, int],
    poll_interval: int,
) -> TimelineResult:
    """
    Measure t1..t5 for every pipe of a rate-limited class.

    Args:
        pipes: pipe lifetimes; pipes with class_rate 0 are not shaped
        samples: throughput samples of the run
        detections, writes, applications: first instant each control milestone
            was reached per pipe
        poll_interval: monitor period in ticks

    Returns:
        A TimelineResult with one record per controlled pipe and one
        PipeNeverControlled per shaped pipe that was not.
    """
    by_pipe: Dict[PipeKey, List[ThroughputSample]] = {}
    for s in samples:
        by_pipe.setdefault(s.pipe, []).append(s)

    result = TimelineResult()
    for p in sorted(pipes, key=lambda p: (p.opened, p.pipe.render())):
        if p.class_rate <= 0:
            continue

        def missing(reason: str) -> None:
            result.uncontrolled.append(
                PipeNeverControlled(p.pipe, p.container_id, reason)
            )

        detected = detections.get(p.pipe)
        written = writes.get(p.pipe)
        applied = applications.get(p.pipe)
        if detected is None:
            missing("never detected by the connection monitor")
            continue
        if written is None:
            missing("settings never written to the store")
            continue
        if applied is None:
            missing("rule never applied by the executor")
            continue
        t5 = _t5(by_pipe.get(p.pipe, []), applied, T5_THRESHOLD * p.class_rate)
        if t5 is None:
            missing("rate never fell to the limit before the pipe closed")
            continue

        first_tick = _first_tick_after(p.opened, poll_interval)
        result.records.append(
            TimelineRecord(
                pipe=p.pipe,
                container_id=p.container_id,
                t1=first_tick - p.opened,
                t2=detected - first_tick,
                t3=written - detected,
                t4=applied - written,
                t5=t5,
            )
        )
    return result


def write_timeline_csv(path: Path, records: Iterable[TimelineRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMELINE_HEADER)
        for r in records:
            w.writerow(
                [r.pipe.render(), r.container_id]
                + [format_ticks(v) for v in (r.t1, r.t2, r.t3, r.t4, r.t5, r.T)]
            )


def read_timeline_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
