"""Scenario loading, experiment runs, timeline measurement and run comparison"""

from .compare import ComparisonReport, compare, write_report
from .errors import HarnessError, InvalidScenario, MismatchedScenarios, RunNotFound
from .experiment import (
    ExitStatus,
    Experiment,
    RunResult,
    execute_run,
    exit_status_for,
    run_experiment,
    run_scenario,
    write_run,
)
from .scenario import (
    ScenarioConfig,
    apply_overrides,
    load_scenario,
    parse_overrides,
    parse_scenario,
)
from .timeline import PipeNeverControlled, TimelineRecord, measure_timeline

__all__ = [
    "ComparisonReport",
    "ExitStatus",
    "Experiment",
    "HarnessError",
    "InvalidScenario",
    "MismatchedScenarios",
    "PipeNeverControlled",
    "RunNotFound",
    "RunResult",
    "ScenarioConfig",
    "TimelineRecord",
    "apply_overrides",
    "compare",
    "execute_run",
    "exit_status_for",
    "load_scenario",
    "measure_timeline",
    "parse_overrides",
    "parse_scenario",
    "run_experiment",
    "run_scenario",
    "write_report",
    "write_run",
]
