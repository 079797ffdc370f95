"""
Run recording and the CSV / summary artifacts of a run
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from ..engine import format_ticks, parse_ticks, to_ticks
from ..shaper import PipeKey
from ..simcluster import Pipe, StepReport

THROUGHPUT_HEADER = ["time", "pipe", "rate"]
PIPES_HEADER = [
    "pipe",
    "container_id",
    "block_id",
    "dn_host",
    "disk_id",
    "class_name",
    "class_rate",
    "opened",
    "closed",
    "bytes",
]


def format_value(value: float) -> str:
    return f"{value:.6f}"


@dataclass(frozen=True)
class ThroughputSample:
    """Rate (bytes/s) of one pipe over the step ending at `time` (ticks)"""

    time: int
    pipe: PipeKey
    rate: float


@dataclass
class PipeRecord:
    pipe: PipeKey
    container_id: str
    block_id: str
    dn_host: str
    disk_id: str
    class_name: str
    class_rate: float
    opened: int
    closed: Optional[int] = None
    bytes: float = 0.0


@dataclass
class RunRecorder:
    """
    Collects samples, pipe lifetimes and per-pipe control milestones
    (first detection, first store write, first rule application), all in
    engine ticks.
    """

    samples: List[ThroughputSample] = field(default_factory=list)
    pipes: Dict[PipeKey, PipeRecord] = field(default_factory=dict)
    detections: Dict[PipeKey, int] = field(default_factory=dict)
    writes: Dict[PipeKey, int] = field(default_factory=dict)
    applications: Dict[PipeKey, int] = field(default_factory=dict)

    def pipe_opened(
        self, pipe: Pipe, class_name: str, class_rate: float, now: int
    ) -> None:
        self.pipes[pipe.key] = PipeRecord(
            pipe=pipe.key,
            container_id=pipe.container_id,
            block_id=pipe.block_id,
            dn_host=pipe.dn_host,
            disk_id=pipe.disk_id,
            class_name=class_name,
            class_rate=class_rate,
            opened=now,
        )

    def pipe_closed(self, pipe: Pipe, now: int) -> None:
        self.pipes[pipe.key].closed = now

    def sync_bytes(self, pipes: Iterable[Pipe]) -> None:
        for pipe in pipes:
            self.pipes[pipe.key].bytes = pipe.bytes_delivered

    def record_step(self, report: StepReport, now: int) -> None:
        for d in sorted(report.deliveries, key=lambda d: d.key.render()):
            self.samples.append(ThroughputSample(now, d.key, d.rate))

    # ControlObserver

    def detected(self, key: PipeKey, now: float) -> None:
        self.detections.setdefault(key, to_ticks(now))

    def written(self, key: PipeKey, now: float) -> None:
        self.writes.setdefault(key, to_ticks(now))

    def applied(self, key: PipeKey, now: float) -> None:
        self.applications.setdefault(key, to_ticks(now))

    def samples_for(self, key: PipeKey) -> List[ThroughputSample]:
        return [s for s in self.samples if s.pipe == key]


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_throughput_csv(path: Path, samples: Iterable[ThroughputSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(THROUGHPUT_HEADER)
        for s in samples:
            w.writerow([format_ticks(s.time), s.pipe.render(), format_value(s.rate)])


def read_throughput_csv(path: Path) -> List[ThroughputSample]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        ThroughputSample(
            parse_ticks(r["time"]), PipeKey.parse(r["pipe"]), float(r["rate"])
        )
        for r in rows
    ]


def write_pipes_csv(path: Path, pipes: Iterable[PipeRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(PIPES_HEADER)
        for p in pipes:
            w.writerow(
                [
                    p.pipe.render(),
                    p.container_id,
                    p.block_id,
                    p.dn_host,
                    p.disk_id,
                    p.class_name,
                    format_value(p.class_rate),
                    format_ticks(p.opened),
                    "" if p.closed is None else format_ticks(p.closed),
                    format_value(p.bytes),
                ]
            )


def read_pipes_csv(path: Path) -> List[PipeRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        PipeRecord(
            pipe=PipeKey.parse(r["pipe"]),
            container_id=r["container_id"],
            block_id=r["block_id"],
            dn_host=r["dn_host"],
            disk_id=r["disk_id"],
            class_name=r["class_name"],
            class_rate=float(r["class_rate"]),
            opened=parse_ticks(r["opened"]),
            closed=parse_ticks(r["closed"]) if r["closed"] else None,
            bytes=float(r["bytes"]),
        )
        for r in rows
    ]


def steady_state_mean(
    samples: Iterable[ThroughputSample], opened: int, end: int, fraction: float = 0.25
) -> float:
    """Mean sample rate over the final `fraction` of the lifetime [opened, end]"""
    window_start = end - int((end - opened) * fraction)
    rates = [s.rate for s in samples if window_start < s.time <= end]
    return sum(rates) / len(rates) if rates else 0.0


def window_mean(samples: Iterable[ThroughputSample], start: int, end: int) -> float:
    """Mean sample rate over samples with start < time <= end"""
    rates = [s.rate for s in samples if start < s.time <= end]
    return sum(rates) / len(rates) if rates else 0.0
