"""
Baseline vs shaped run comparison
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel

from ..engine import parse_ticks, to_seconds, to_ticks
from ..shaper import PipeKey
from .errors import MismatchedScenarios, RunNotFound
from .metrics import (
    PipeRecord,
    ThroughputSample,
    read_pipes_csv,
    read_throughput_csv,
    steady_state_mean,
    window_mean,
)
from .timeline import read_timeline_csv

TOLERANCE = 0.05

Ratio = Union[float, Literal["inf"]]


class PipeComparison(BaseModel):
    container_id: str
    block_id: str
    class_name: str
    class_rate: float
    baseline_pipe: str
    shaped_pipe: str
    baseline_mean: float
    shaped_mean: float
    deviation: Optional[float] = None
    passed: Optional[bool] = None
    uncontrolled_period: Optional[float] = None
    uncontrolled_mean: Optional[float] = None


class ComparisonReport(BaseModel):
    baseline_dir: str
    shaped_dir: str
    tolerance: float = TOLERANCE
    seniority_ratio: Optional[Ratio] = None
    senior_pipe: Optional[str] = None
    junior_pipe: Optional[str] = None
    pipes: List[PipeComparison] = []
    unmatched: List[str] = []
    passed: bool = False

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"


class _Run:
    def __init__(self, run_dir: Path):
        self.dir = Path(run_dir)
        scenario_path = self.dir / "scenario.json"
        if not scenario_path.is_file():
            raise RunNotFound(f"No scenario.json in {self.dir}")
        self.scenario: Dict[str, Any] = json.loads(
            scenario_path.read_text(encoding="utf-8")
        )
        self.end = to_ticks(self.scenario["parameters"]["sim_duration"])
        self.pipes: List[PipeRecord] = read_pipes_csv(self.dir / "pipes.csv")
        self.samples: Dict[PipeKey, List[ThroughputSample]] = {}
        for s in read_throughput_csv(self.dir / "throughput.csv"):
            self.samples.setdefault(s.pipe, []).append(s)
        timeline_path = self.dir / "timeline.csv"
        self.timeline = (
            {r["pipe"]: r for r in read_timeline_csv(timeline_path)}
            if timeline_path.is_file()
            else {}
        )

    def by_block(self) -> Dict[Tuple[str, str], PipeRecord]:
        return {(p.container_id, p.block_id): p for p in self.pipes}

    def steady_mean(self, p: PipeRecord) -> float:
        end = p.closed if p.closed is not None else self.end
        return steady_state_mean(self.samples.get(p.pipe, []), p.opened, end)


def _first_difference(a: Any, b: Any, path: str = "") -> Optional[str]:
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                return f"{path}.{key}".lstrip(".")
            found = _first_difference(a[key], b[key], f"{path}.{key}")
            if found:
                return found
        return None
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return f"{path} (length {len(a)} vs {len(b)})".lstrip(".")
        for i, (x, y) in enumerate(zip(a, b)):
            found = _first_difference(x, y, f"{path}.{i}")
            if found:
                return found
        return None
    return None if a == b else path.lstrip(".")


def _seniority(run: _Run) -> Tuple[Optional[Ratio], Optional[str], Optional[str]]:
    # Each container is represented by its first pipe
    firsts: Dict[str, PipeRecord] = {}
    for p in sorted(run.pipes, key=lambda p: (p.opened, p.pipe.render())):
        firsts.setdefault(p.container_id, p)
    if not firsts:
        return None, None, None
    ordered = list(firsts.values())
    senior = ordered[0]
    peers = [p for p in ordered[1:] if p.dn_host == senior.dn_host]
    if not peers:
        return None, senior.pipe.render(), None
    junior = peers[-1]
    denominator = run.steady_mean(junior)
    ratio: Ratio = "inf" if denominator == 0 else run.steady_mean(senior) / denominator
    return ratio, senior.pipe.render(), junior.pipe.render()


def compare(baseline_dir: Path, shaped_dir: Path) -> ComparisonReport:
    """
    Compare a baseline (unshaped) run with a shaped run of the same scenario.

    Pipes are matched by (container_id, block_id). A shaped pipe passes when
    its steady-state mean is within TOLERANCE of its class rate.
    """
    baseline = _Run(baseline_dir)
    shaped = _Run(shaped_dir)

    a = {k: v for k, v in baseline.scenario.items() if k != "shaping_enabled"}
    b = {k: v for k, v in shaped.scenario.items() if k != "shaping_enabled"}
    difference = _first_difference(a, b)
    if difference is not None:
        raise MismatchedScenarios(f"Scenarios differ at {difference}")

    ratio, senior, junior = _seniority(baseline)
    report = ComparisonReport(
        baseline_dir=str(baseline_dir),
        shaped_dir=str(shaped_dir),
        seniority_ratio=ratio,
        senior_pipe=senior,
        junior_pipe=junior,
    )

    base_pipes = baseline.by_block()
    shaped_pipes = shaped.by_block()
    flags = []
    for ident in sorted(set(base_pipes) | set(shaped_pipes)):
        if ident not in base_pipes or ident not in shaped_pipes:
            report.unmatched.append(f"{ident[0]}/{ident[1]}")
            continue
        bp, sp = base_pipes[ident], shaped_pipes[ident]
        entry = PipeComparison(
            container_id=sp.container_id,
            block_id=sp.block_id,
            class_name=sp.class_name,
            class_rate=sp.class_rate,
            baseline_pipe=bp.pipe.render(),
            shaped_pipe=sp.pipe.render(),
            baseline_mean=baseline.steady_mean(bp),
            shaped_mean=shaped.steady_mean(sp),
        )
        if sp.class_rate > 0:
            entry.deviation = abs(entry.shaped_mean - sp.class_rate) / sp.class_rate
            entry.passed = entry.deviation <= TOLERANCE
            flags.append(entry.passed)
        row = shaped.timeline.get(sp.pipe.render())
        if row is not None:
            period = parse_ticks(row["T"])
            entry.uncontrolled_period = to_seconds(period)
            entry.uncontrolled_mean = window_mean(
                shaped.samples.get(sp.pipe, []), sp.opened, sp.opened + period
            )
        report.pipes.append(entry)

    report.passed = bool(flags) and all(flags)
    return report


def write_report(report: ComparisonReport, path: Path) -> None:
    Path(path).write_text(report.to_json(), encoding="utf-8")
