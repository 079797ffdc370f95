"""
Scenario schema, loading and `--set` overrides
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from ..simcluster import InvalidScenario, build_cluster

MB = 1_000_000


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DiskConfig(_Strict):
    disk_id: str
    capacity: float


class MachineConfig(_Strict):
    host: str
    vcores: int
    memory: int
    disks: List[DiskConfig] = []
    runs_datanode: bool = False
    runs_nodemanager: bool = False
    nic_capacity: Optional[float] = None

    @field_validator("host")
    @classmethod
    def validate_host(cls, v: str) -> str:
        if not v or any(c.isspace() or c in ":>" for c in v):
            raise ValueError("host must be non-empty without spaces, ':' or '>'")
        return v

    @field_validator("vcores", "memory")
    @classmethod
    def non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be >= 0")
        return v


class ReplicaConfig(_Strict):
    host: str
    disk_id: str


class BlockConfig(_Strict):
    block_id: str
    size: int
    replicas: List[ReplicaConfig]


class FileConfig(_Strict):
    name: str
    blocks: List[BlockConfig]


class ContainerClassConfig(_Strict):
    class_name: str
    vcores: int = 0
    memory: int = 0
    io_rate: float = 0
    burst: Optional[float] = None

    @field_validator("vcores", "memory", "io_rate")
    @classmethod
    def non_negative(cls, v):
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("burst")
    @classmethod
    def positive_burst(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and v <= 0:
            raise ValueError("burst must be > 0")
        return v


class ContainerRequestConfig(_Strict):
    container_id: str
    class_name: str
    host: str
    start_time: float
    file: str

    @field_validator("container_id")
    @classmethod
    def validate_container_id(cls, v: str) -> str:
        if not v or any(c.isspace() for c in v):
            raise ValueError("container_id must be non-empty without whitespace")
        return v

    @field_validator("start_time")
    @classmethod
    def validate_start_time(cls, v: float) -> float:
        if v < 0:
            raise ValueError("start_time must be >= 0")
        return v


class Parameters(_Strict):
    dt: float = 0.1
    poll_interval: float = 1.0
    watch_latency: float = 0.01
    aimd_increase: float = 5 * MB
    aimd_beta: float = 0.5
    aimd_initial: float = 10 * MB
    sim_duration: float = 60.0
    seed: int = 0
    read_jitter: float = 0.0
    overhead_factor: float = 1.0

    @field_validator(
        "dt", "poll_interval", "sim_duration", "aimd_initial", "overhead_factor"
    )
    @classmethod
    def positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @field_validator("watch_latency", "aimd_increase")
    @classmethod
    def non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("aimd_beta")
    @classmethod
    def validate_beta(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("aimd_beta must be in (0, 1)")
        return v

    @field_validator("read_jitter")
    @classmethod
    def validate_jitter(cls, v: float) -> float:
        if not 0 <= v < 1:
            raise ValueError("read_jitter must be in [0, 1)")
        return v


class ScenarioConfig(_Strict):
    machines: List[MachineConfig]
    files: List[FileConfig] = []
    container_classes: List[ContainerClassConfig] = []
    container_requests: List[ContainerRequestConfig] = []
    shaping_enabled: bool = True
    parameters: Parameters = Parameters()


OVERRIDE_KEYS = tuple(Parameters.model_fields) + ("shaping_enabled",)


def _format_validation_error(e: ValidationError) -> str:
    first = e.errors()[0]
    loc = ".".join(str(part) for part in first["loc"]) or "<root>"
    return f"{loc}: {first['msg']}"


def check_scenario(scenario: ScenarioConfig) -> None:
    """Cross-reference checks; raises InvalidScenario naming the first violation"""
    build_cluster(scenario)

    hosts = {m.host: m for m in scenario.machines}
    files = {f.name for f in scenario.files}
    classes = set()
    for cc in scenario.container_classes:
        if cc.class_name in classes:
            raise InvalidScenario(
                f"container_classes: duplicate class {cc.class_name!r}"
            )
        classes.add(cc.class_name)

    seen = set()
    for i, req in enumerate(scenario.container_requests):
        where = f"container_requests.{i}"
        if req.container_id in seen:
            raise InvalidScenario(
                f"{where}: duplicate container_id {req.container_id!r}"
            )
        seen.add(req.container_id)
        if req.class_name not in classes:
            raise InvalidScenario(f"{where}: unknown class {req.class_name!r}")
        machine = hosts.get(req.host)
        if machine is None:
            raise InvalidScenario(f"{where}: unknown host {req.host!r}")
        if not machine.runs_nodemanager:
            raise InvalidScenario(f"{where}: host {req.host!r} runs no NodeManager")
        if req.file not in files:
            raise InvalidScenario(f"{where}: unknown file {req.file!r}")

    params = scenario.parameters
    latest = max((r.start_time for r in scenario.container_requests), default=0.0)
    if params.sim_duration <= latest:
        raise InvalidScenario(
            f"parameters.sim_duration: must exceed the latest start_time ({latest})"
        )
    if params.dt > params.sim_duration:
        raise InvalidScenario("parameters.dt: must not exceed sim_duration")


def parse_scenario(data: Union[str, bytes, Dict[str, Any]]) -> ScenarioConfig:
    """Validate a scenario document (JSON text or decoded object)"""
    try:
        if isinstance(data, (str, bytes)):
            scenario = ScenarioConfig.model_validate_json(data)
        else:
            scenario = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidScenario(_format_validation_error(e))
    check_scenario(scenario)
    return scenario


def load_scenario(path: Path) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    overrides: Dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InvalidScenario(f"--set expects key=value, got {item!r}")
        if key not in OVERRIDE_KEYS:
            raise InvalidScenario(
                f"--set: unknown key {key!r} (allowed: {', '.join(OVERRIDE_KEYS)})"
            )
        overrides[key] = value.strip()
    return overrides


def apply_overrides(
    scenario: ScenarioConfig, overrides: Dict[str, Any]
) -> ScenarioConfig:
    """Return a re-validated copy with `shaping_enabled` / parameter fields replaced"""
    if not overrides:
        return scenario
    data = scenario.model_dump()
    for key, value in overrides.items():
        if key == "shaping_enabled":
            data["shaping_enabled"] = value
        elif key in Parameters.model_fields:
            data["parameters"][key] = value
        else:
            raise InvalidScenario(f"--set: unknown key {key!r}")
    return parse_scenario(data)


def canonical_json(scenario: ScenarioConfig) -> str:
    return json.dumps(scenario.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
