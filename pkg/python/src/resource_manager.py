"""
Throughput-aware resource management: resource specs, container classes,
admission control and the allocation registry read by the connection monitor.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, fields
from enum import Enum
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Union

log = logging.getLogger(__name__)

DIMENSIONS = ("vcores", "memory", "io_rate")


class ResourceError(Exception):
    """Base class for resource manager errors"""


class NoSuchClass(ResourceError):
    pass


class NoSuchHost(ResourceError):
    pass


class InvalidState(ResourceError):
    pass


class DuplicateContainer(ResourceError):
    pass


@dataclass(frozen=True)
class ResourceSpec:
    """Container demand or host capacity; io_rate is bytes/s"""

    vcores: int = 0
    memory: int = 0
    io_rate: float = 0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")

    def __add__(self, other: "ResourceSpec") -> "ResourceSpec":
        return ResourceSpec(
            self.vcores + other.vcores,
            self.memory + other.memory,
            self.io_rate + other.io_rate,
        )

    def __sub__(self, other: "ResourceSpec") -> "ResourceSpec":
        return ResourceSpec(
            self.vcores - other.vcores,
            self.memory - other.memory,
            self.io_rate - other.io_rate,
        )

    def __le__(self, other: "ResourceSpec") -> bool:
        return self.first_exceeding(other) is None

    def __ge__(self, other: "ResourceSpec") -> bool:
        return other <= self

    def first_exceeding(self, capacity: "ResourceSpec") -> Optional[str]:
        """Name of the first dimension where self > capacity, in DIMENSIONS order"""
        for name in DIMENSIONS:
            if getattr(self, name) > getattr(capacity, name):
                return name
        return None


ZERO = ResourceSpec()


@dataclass(frozen=True)
class ContainerClass:
    class_name: str
    spec: ResourceSpec
    burst: Optional[float] = None


class AllocationState(Enum):
    REQUESTED = "Requested"
    RUNNING = "Running"
    FINISHED = "Finished"


@dataclass
class Allocation:
    container_id: str
    host: str
    class_name: str
    spec: ResourceSpec
    state: AllocationState = AllocationState.REQUESTED
    started_at: Optional[float] = None
    finished_at: Optional[float] = None


@dataclass(frozen=True)
class Accept:
    container_id: str


@dataclass(frozen=True)
class Reject:
    reason: str
    detail: str = ""


AdmissionResult = Union[Accept, Reject]


class RegistryEntry(NamedTuple):
    class_name: str
    io_rate: float


class ResourceManager:
    """
    Tracks host capacities and allocations.

    Requested and Running allocations count against their host; Finished ones
    count zero.
    """

    def __init__(
        self, capacities: Mapping[str, ResourceSpec], classes: Iterable[ContainerClass]
    ):
        self._capacity: Dict[str, ResourceSpec] = dict(capacities)
        self._classes: Dict[str, ContainerClass] = {}
        for cls in classes:
            if cls.class_name in self._classes:
                raise ValueError(f"Duplicate container class {cls.class_name!r}")
            self._classes[cls.class_name] = cls
        self._allocations: Dict[str, Allocation] = {}
        self._used: Dict[str, ResourceSpec] = {host: ZERO for host in self._capacity}
        self._ids = itertools.count(1)

    def capacity(self, host: str) -> ResourceSpec:
        self._require_host(host)
        return self._capacity[host]

    def used(self, host: str) -> ResourceSpec:
        self._require_host(host)
        return self._used[host]

    def available(self, host: str) -> ResourceSpec:
        return self.capacity(host) - self.used(host)

    def container_class(self, class_name: str) -> ContainerClass:
        cls = self._classes.get(class_name)
        if cls is None:
            raise NoSuchClass(class_name)
        return cls

    def admit(
        self, class_name: str, host: str, container_id: Optional[str] = None
    ) -> AdmissionResult:
        cls = self.container_class(class_name)
        self._require_host(host)
        if container_id is None:
            container_id = self._next_id()
        elif container_id in self._allocations:
            raise DuplicateContainer(container_id)

        demand = self._used[host] + cls.spec
        exceeded = demand.first_exceeding(self._capacity[host])
        if exceeded is not None:
            detail = (
                f"{host}: {exceeded} {getattr(demand, exceeded)} > "
                f"{getattr(self._capacity[host], exceeded)}"
            )
            log.warning("Rejected %s (%s) on %s", container_id, class_name, detail)
            return Reject(reason=exceeded, detail=detail)

        self._allocations[container_id] = Allocation(
            container_id=container_id, host=host, class_name=class_name, spec=cls.spec
        )
        self._used[host] = demand
        log.debug("Admitted %s (%s) on %s", container_id, class_name, host)
        return Accept(container_id)

    def start_container(self, container_id: str, now: float) -> None:
        alloc = self._require_state(container_id, AllocationState.REQUESTED)
        alloc.state = AllocationState.RUNNING
        alloc.started_at = now
        log.info("Container %s started on %s at %.6f", container_id, alloc.host, now)

    def finish_container(self, container_id: str, now: float) -> None:
        alloc = self._require_state(container_id, AllocationState.RUNNING)
        alloc.state = AllocationState.FINISHED
        alloc.finished_at = now
        # Re-summed in admission order so release is exact for float io_rate
        self._used[alloc.host] = self._counted(alloc.host)
        log.info("Container %s finished on %s at %.6f", container_id, alloc.host, now)

    def registry_lookup(self, container_id: str) -> Optional[RegistryEntry]:
        alloc = self._allocations.get(container_id)
        if alloc is None or alloc.state is not AllocationState.RUNNING:
            return None
        return RegistryEntry(alloc.class_name, alloc.spec.io_rate)

    def allocation(self, container_id: str) -> Allocation:
        alloc = self._allocations.get(container_id)
        if alloc is None:
            raise InvalidState(f"Unknown container {container_id}")
        return alloc

    def allocations(self) -> List[Allocation]:
        return list(self._allocations.values())

    def oversubscribed_hosts(self) -> List[str]:
        """Hosts whose counted allocations exceed capacity in some dimension"""
        return [
            host
            for host, capacity in self._capacity.items()
            if not self._counted(host) <= capacity
        ]

    def _counted(self, host: str) -> ResourceSpec:
        total = ZERO
        for alloc in self._allocations.values():
            if alloc.host == host and alloc.state is not AllocationState.FINISHED:
                total = total + alloc.spec
        return total

    def _next_id(self) -> str:
        while True:
            candidate = f"container_{next(self._ids):06d}"
            if candidate not in self._allocations:
                return candidate

    def _require_host(self, host: str) -> None:
        if host not in self._capacity:
            raise NoSuchHost(host)

    def _require_state(
        self, container_id: str, expected: AllocationState
    ) -> Allocation:
        alloc = self._allocations.get(container_id)
        if alloc is None:
            raise InvalidState(f"Unknown container {container_id}")
        if alloc.state is not expected:
            raise InvalidState(
                f"{container_id} is {alloc.state.value}, expected {expected.value}"
            )
        return alloc
