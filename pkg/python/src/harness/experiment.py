"""
Experiment orchestration: wires the cluster, resource manager, coordination
store and control agents onto one event engine and runs a scenario.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from ..control_agents import (
    ConnectionMonitor,
    TrafficControlDataCollector,
    TrafficControlDataSubmitter,
    TrafficControlExecutor,
    setting_rate,
)
from ..coordstore import CoordinationStore
from ..engine import Engine, Phase, format_ticks, to_seconds, to_ticks
from ..resource_manager import (
    Accept,
    ContainerClass,
    Reject,
    ResourceManager,
    ResourceSpec,
)
from ..shaper import PipeKey
from ..simcluster import Block, Cluster, build_cluster
from .errors import InvalidScenario, MismatchedScenarios, RunNotFound
from .metrics import (
    RunRecorder,
    format_value,
    steady_state_mean,
    write_pipes_csv,
    write_throughput_csv,
)
from .scenario import (
    ContainerRequestConfig,
    ScenarioConfig,
    apply_overrides,
    canonical_json,
    load_scenario,
    parse_overrides,
)
from .timeline import TimelineResult, measure_timeline, write_timeline_csv

log = logging.getLogger(__name__)

THROUGHPUT_CSV = "throughput.csv"
TIMELINE_CSV = "timeline.csv"
SUMMARY_TXT = "summary.txt"
SCENARIO_JSON = "scenario.json"
PIPES_CSV = "pipes.csv"


class ExitStatus(IntEnum):
    OK = 0
    FAILURE = 1
    INVALID = 2
    IO_ERROR = 3
    MISMATCH = 4


@dataclass
class _ContainerRun:
    request: ContainerRequestConfig
    blocks: List[Block]
    next_block: int = 0


@dataclass
class RunResult:
    scenario: ScenarioConfig
    recorder: RunRecorder
    timeline: TimelineResult
    end: int
    accepted: List[str] = field(default_factory=list)
    rejected: List[Tuple[str, Reject]] = field(default_factory=list)
    parse_errors: int = 0
    inconsistencies: int = 0
    store_writes: int = 0


class Experiment:
    """One scenario run; owns its engine and every component it drives"""

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        params = scenario.parameters
        self.dt = to_ticks(params.dt)
        self.poll_interval = to_ticks(params.poll_interval)
        self.end = to_ticks(params.sim_duration)
        if self.dt <= 0 or self.poll_interval <= 0:
            raise InvalidScenario(
                "parameters: dt and poll_interval must be at least 1us"
            )

        self.engine = Engine()
        self.cluster: Cluster = build_cluster(scenario)
        self.resource_manager = ResourceManager(
            {
                m.host: ResourceSpec(
                    m.vcores, m.memory, self.cluster.machines[m.host].io_capacity
                )
                for m in scenario.machines
            },
            [
                ContainerClass(
                    c.class_name, ResourceSpec(c.vcores, c.memory, c.io_rate), c.burst
                )
                for c in scenario.container_classes
            ],
        )
        self.store = CoordinationStore(
            watch_latency=params.watch_latency,
            clock=self.engine.seconds_clock(),
            dispatch=self.engine.dispatcher(Phase.WATCH),
        )
        self.recorder = RunRecorder()
        self.collectors: Dict[str, TrafficControlDataCollector] = {}
        self.executors: Dict[str, TrafficControlExecutor] = {}
        self.submitters: Dict[str, TrafficControlDataSubmitter] = {}
        self.last_connection_change = 0
        self._runs: Dict[str, _ContainerRun] = {}
        self._accepted: List[str] = []
        self._rejected: List[Tuple[str, Reject]] = []

    # Wiring

    def setup(self) -> None:
        self._admit_all()
        if self.scenario.shaping_enabled:
            self._start_control_plane()
        self.engine.every(self.dt, self._step, Phase.DATA_PLANE, start=self.dt)
        for cid in self._accepted:
            run = self._runs[cid]
            self.engine.call_at(
                to_ticks(run.request.start_time),
                lambda cid=cid: self._start_container(cid),
                Phase.LIFECYCLE,
            )

    def _admit_all(self) -> None:
        for req in self.scenario.container_requests:
            result = self.resource_manager.admit(
                req.class_name, req.host, req.container_id
            )
            if isinstance(result, Accept):
                self._accepted.append(result.container_id)
                self._runs[result.container_id] = _ContainerRun(
                    req, self.cluster.block_map.blocks(req.file)
                )
            else:
                self._rejected.append((req.container_id, result))

    def _start_control_plane(self) -> None:
        machines = self.cluster.machines
        datanodes = sorted(h for h, m in machines.items() if m.runs_datanode)
        nodemanagers = sorted(h for h, m in machines.items() if m.runs_nodemanager)

        for dn in datanodes:
            executor = TrafficControlExecutor(
                dn, self.cluster.shaper(dn), self.recorder
            )
            session = self.store.open_session()
            collector = TrafficControlDataCollector(
                dn,
                self.store,
                session,
                on_events=lambda events, ex=executor: ex.execute(
                    events, self.engine.now_seconds
                ),
            )
            collector.start()
            self.executors[dn] = executor
            self.collectors[dn] = collector

        for nm in nodemanagers:
            monitor = ConnectionMonitor(
                nm, self.cluster, self.resource_manager, self.recorder
            )
            submitter = TrafficControlDataSubmitter(
                nm, self.store, self.store.open_session(), self.recorder
            )
            self.submitters[nm] = submitter

            def tick(monitor=monitor, submitter=submitter) -> None:
                now = self.engine.now_seconds
                submitter.submit(monitor.monitor_tick(now), now)

            self.engine.every(self.poll_interval, tick, Phase.MONITOR)

    # Event handlers

    def _step(self) -> None:
        now = self.engine.now
        report = self.cluster.advance(to_seconds(self.dt), now=to_seconds(now))
        self.recorder.record_step(report, now)
        for pipe in report.closed:
            self.recorder.pipe_closed(pipe, now)
            self.last_connection_change = now
            self.engine.call_at(
                now,
                lambda cid=pipe.container_id: self._next_block(cid),
                Phase.LIFECYCLE,
            )

    def _start_container(self, container_id: str) -> None:
        run = self._runs[container_id]
        now = self.engine.now
        self.resource_manager.start_container(container_id, to_seconds(now))
        self.cluster.start_container(container_id, run.request.host)
        self._open_next(run)

    def _next_block(self, container_id: str) -> None:
        run = self._runs[container_id]
        run.next_block += 1
        self._open_next(run)

    def _open_next(self, run: _ContainerRun) -> None:
        now = self.engine.now
        cid = run.request.container_id
        if run.next_block >= len(run.blocks):
            self.cluster.stop_container(cid, to_seconds(now))
            self.resource_manager.finish_container(cid, to_seconds(now))
            return
        block = run.blocks[run.next_block]
        pipe = self.cluster.open_pipe(cid, block.block_id, to_seconds(now))
        cls = self.resource_manager.container_class(run.request.class_name)
        self.recorder.pipe_opened(pipe, cls.class_name, cls.spec.io_rate, now)
        self.last_connection_change = now

    # Run

    def run(self, until: Optional[int] = None) -> None:
        self.engine.run(until=self.end if until is None else until)

    def result(self) -> RunResult:
        self.recorder.sync_bytes(self.cluster.pipes())
        if self.scenario.shaping_enabled:
            timeline = measure_timeline(
                self.recorder.pipes.values(),
                self.recorder.samples,
                self.recorder.detections,
                self.recorder.writes,
                self.recorder.applications,
                self.poll_interval,
            )
        else:
            timeline = TimelineResult()
        return RunResult(
            scenario=self.scenario,
            recorder=self.recorder,
            timeline=timeline,
            end=self.end,
            accepted=list(self._accepted),
            rejected=list(self._rejected),
            parse_errors=sum(c.parse_errors for c in self.collectors.values()),
            inconsistencies=sum(e.inconsistencies for e in self.executors.values()),
            store_writes=sum(s.writes for s in self.submitters.values()),
        )

    # Introspection for convergence checks

    def expected_filters(self) -> Dict[str, Dict[PipeKey, int]]:
        """Per DataNode: pipe -> rate implied by live connections and classes"""
        expected: Dict[str, Dict[PipeKey, int]] = {
            dn: {} for dn in self.cluster.shapers
        }
        for pipe in self.cluster.active_pipes():
            entry = self.resource_manager.registry_lookup(pipe.container_id)
            if entry is not None and entry.io_rate > 0:
                expected[pipe.dn_host][pipe.key] = setting_rate(entry.io_rate)
        return expected

    def installed_filters(self) -> Dict[str, Dict[PipeKey, int]]:
        """Per DataNode: pipe -> rate of the class its exact filter points to"""
        installed: Dict[str, Dict[PipeKey, int]] = {}
        for dn, shaper in self.cluster.shapers.items():
            rules = {}
            for f in shaper.filters():
                key = PipeKey(
                    f.pattern.src_host,
                    f.pattern.src_port,
                    f.pattern.dst_host,
                    f.pattern.dst_port,
                )
                rules[key] = int(shaper.get_class(f.class_id).rate)
            installed[dn] = rules
        return installed


def run_experiment(scenario: ScenarioConfig) -> RunResult:
    experiment = Experiment(scenario)
    experiment.setup()
    experiment.run()
    result = experiment.result()
    log.info(
        "Run finished: %d pipes, %d samples",
        len(result.recorder.pipes),
        len(result.recorder.samples),
    )
    return result


def render_summary(result: RunResult) -> str:
    scenario = result.scenario
    recorder = result.recorder
    lines = [
        f"shaping_enabled: {str(scenario.shaping_enabled).lower()}",
        f"sim_duration: {format_ticks(result.end)}",
        f"containers_admitted: {len(result.accepted)}",
        f"containers_rejected: {len(result.rejected)}",
    ]
    for cid, reject in result.rejected:
        lines.append(f"  rejected {cid}: {reject.reason} ({reject.detail})")

    lines.append(f"pipes: {len(recorder.pipes)}")
    by_pipe: Dict[PipeKey, list] = {}
    for s in recorder.samples:
        by_pipe.setdefault(s.pipe, []).append(s)
    for p in recorder.pipes.values():
        end = p.closed if p.closed is not None else result.end
        mean = steady_state_mean(by_pipe.get(p.pipe, []), p.opened, end)
        lines.append(
            f"  {p.pipe.render()} container={p.container_id} block={p.block_id} "
            f"class={p.class_name} class_rate={format_value(p.class_rate)} "
            f"opened={format_ticks(p.opened)} "
            f"closed={'-' if p.closed is None else format_ticks(p.closed)} "
            f"steady_mean={format_value(mean)}"
        )

    if not scenario.shaping_enabled:
        lines.append("timeline: shaping disabled, no pipe was controlled")
    else:
        lines.append(f"timeline_records: {len(result.timeline.records)}")
        for r in result.timeline.records:
            lines.append(f"  {r.pipe.render()} T={format_ticks(r.T)}")
        lines.append(f"never_controlled: {len(result.timeline.uncontrolled)}")
        for u in result.timeline.uncontrolled:
            lines.append(f"  PipeNeverControlled {u}")
        lines.append(f"store_writes: {result.store_writes}")
        lines.append(f"parse_errors: {result.parse_errors}")
        lines.append(f"executor_inconsistencies: {result.inconsistencies}")
    return "\n".join(lines) + "\n"


def write_run(result: RunResult, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_throughput_csv(out_dir / THROUGHPUT_CSV, result.recorder.samples)
    write_timeline_csv(out_dir / TIMELINE_CSV, result.timeline.records)
    write_pipes_csv(out_dir / PIPES_CSV, result.recorder.pipes.values())
    (out_dir / SUMMARY_TXT).write_text(render_summary(result), encoding="utf-8")
    scenario_json = canonical_json(result.scenario)
    (out_dir / SCENARIO_JSON).write_text(scenario_json, encoding="utf-8")


def execute_run(
    path: Path, out_dir: Path, overrides: Optional[Mapping[str, str]] = None
) -> RunResult:
    """Load, override, run and write one scenario; errors propagate to the caller"""
    scenario = load_scenario(Path(path))
    scenario = apply_overrides(scenario, dict(overrides or {}))
    result = run_experiment(scenario)
    write_run(result, out_dir)
    return result


def exit_status_for(exc: BaseException) -> ExitStatus:
    if isinstance(exc, InvalidScenario):
        return ExitStatus.INVALID
    if isinstance(exc, MismatchedScenarios):
        return ExitStatus.MISMATCH
    if isinstance(exc, (OSError, RunNotFound)):
        return ExitStatus.IO_ERROR
    return ExitStatus.FAILURE


def run_scenario(
    path: Path, out_dir: Path, overrides: Optional[Mapping[str, str]] = None
) -> ExitStatus:
    """Run one scenario into out_dir and report the outcome as an exit status"""
    try:
        execute_run(path, out_dir, overrides)
    except Exception as e:
        status = exit_status_for(e)
        print(f"[piperate] run failed: {e}", file=sys.stderr)
        log.debug("Run of %s failed", path, exc_info=True)
        return status
    print(f"[piperate] wrote run to {out_dir}", file=sys.stderr)
    return ExitStatus.OK


__all__ = [
    "ExitStatus",
    "Experiment",
    "RunResult",
    "execute_run",
    "exit_status_for",
    "parse_overrides",
    "render_summary",
    "run_experiment",
    "run_scenario",
    "write_run",
]
