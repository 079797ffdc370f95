"""
Cluster data plane: machines, disks, the NameNode block directory and the
data pipes that stream blocks from DataNode disks to containers.

Each pipe has a TCP subpipe (an AIMD demand, optionally limited by the
DataNode's traffic shaper and NIC) and a disk subpipe (a share of the disk
allocated in seniority order). `Cluster.advance` moves every active pipe
forward by one time step.
"""

from __future__ import annotations

import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

from .shaper import PipeKey, TrafficShaper

if TYPE_CHECKING:
    from .harness.scenario import ScenarioConfig

log = logging.getLogger(__name__)

DATANODE_PORT = 50010
EPHEMERAL_PORT_BASE = 32768
EPHEMERAL_PORT_LIMIT = 65535
MATCH_TOLERANCE = 1e-9


class ClusterError(Exception):
    """Base class for cluster errors"""


class InvalidScenario(ClusterError):
    pass


class NoSuchFile(ClusterError):
    pass


class NoSuchBlock(ClusterError):
    pass


class ContainerNotRunning(ClusterError):
    pass


class NoSuchHost(ClusterError):
    pass


@dataclass(frozen=True)
class Disk:
    disk_id: str
    capacity: float


@dataclass
class Machine:
    host: str
    vcores: int
    memory: int
    disks: List[Disk] = field(default_factory=list)
    runs_datanode: bool = False
    runs_nodemanager: bool = False
    nic_capacity: Optional[float] = None

    @property
    def io_capacity(self) -> float:
        return sum(d.capacity for d in self.disks)

    def disk(self, disk_id: str) -> Optional[Disk]:
        return next((d for d in self.disks if d.disk_id == disk_id), None)


@dataclass(frozen=True)
class ReplicaLocation:
    host: str
    disk_id: str


@dataclass(frozen=True)
class Block:
    block_id: str
    size: int
    replicas: Tuple[ReplicaLocation, ...]


class BlockMap:
    """NameNode view: file -> ordered blocks"""

    def __init__(self, files: Dict[str, List[Block]]):
        self._files = {name: list(blocks) for name, blocks in files.items()}
        self._blocks: Dict[str, Block] = {}
        self._owner: Dict[str, str] = {}
        for name, blocks in self._files.items():
            for block in blocks:
                self._blocks[block.block_id] = block
                self._owner[block.block_id] = name

    def files(self) -> List[str]:
        return list(self._files)

    def blocks(self, file: str) -> List[Block]:
        if file not in self._files:
            raise NoSuchFile(file)
        return list(self._files[file])

    def block(self, block_id: str) -> Block:
        block = self._blocks.get(block_id)
        if block is None:
            raise NoSuchBlock(block_id)
        return block

    def file_of(self, block_id: str) -> str:
        self.block(block_id)
        return self._owner[block_id]

    def __len__(self) -> int:
        return len(self._blocks)


class PipeState(Enum):
    ACTIVE = "Active"
    CLOSED = "Closed"


@dataclass
class Pipe:
    key: PipeKey
    container_id: str
    block_id: str
    dn_host: str
    disk_id: str
    size: int
    start_time: float
    tcp_demand: float
    state: PipeState = PipeState.ACTIVE
    bytes_delivered: float = 0.0
    slow_start: bool = True
    closed_at: Optional[float] = None

    @property
    def remaining(self) -> float:
        return self.size - self.bytes_delivered

    @property
    def is_local(self) -> bool:
        return self.key.src_host == self.key.dst_host

    def seniority(self) -> Tuple[float, str]:
        return (self.start_time, self.key.render())


@dataclass(frozen=True)
class ConnectionRecord:
    key: PipeKey
    container_id: str
    observed_since: float


@dataclass(frozen=True)
class Delivery:
    key: PipeKey
    container_id: str
    dn_host: str
    disk_id: str
    delivered: float
    rate: float


@dataclass
class StepReport:
    time: float
    dt: float
    deliveries: List[Delivery] = field(default_factory=list)
    closed: List[Pipe] = field(default_factory=list)


@dataclass
class ClusterParams:
    aimd_increase: float = 5e6
    aimd_beta: float = 0.5
    aimd_initial: float = 1e7
    read_jitter: float = 0.0
    seed: int = 0
    overhead_factor: float = 1.0


class Cluster:
    def __init__(
        self,
        machines: Sequence[Machine],
        block_map: BlockMap,
        params: Optional[ClusterParams] = None,
    ):
        self.machines: Dict[str, Machine] = {m.host: m for m in machines}
        self.block_map = block_map
        self.params = params or ClusterParams()
        self.now = 0.0
        self.shapers: Dict[str, TrafficShaper] = {
            m.host: TrafficShaper(m.host, self.params.overhead_factor)
            for m in machines
            if m.runs_datanode
        }
        self._rng = random.Random(self.params.seed)
        self._running: Dict[str, str] = {}
        self._next_port: Dict[str, int] = defaultdict(lambda: EPHEMERAL_PORT_BASE)
        self._pipes: List[Pipe] = []
        self._active: Dict[PipeKey, Pipe] = {}

    # NameNode

    def locate_blocks(self, file: str) -> List[Tuple[str, Tuple[ReplicaLocation, ...]]]:
        return [(b.block_id, b.replicas) for b in self.block_map.blocks(file)]

    # Containers

    def start_container(self, container_id: str, host: str) -> None:
        self._require_host(host)
        self._running[container_id] = host

    def stop_container(
        self, container_id: str, now: Optional[float] = None
    ) -> List[Pipe]:
        """Mark a container stopped and close any pipe it still has open"""
        self._running.pop(container_id, None)
        closed = [p for p in self._active.values() if p.container_id == container_id]
        for pipe in closed:
            self._close(pipe, self.now if now is None else now)
        return closed

    def is_running(self, container_id: str) -> bool:
        return container_id in self._running

    # Pipes

    def open_pipe(self, container_id: str, block_id: str, now: float) -> Pipe:
        host = self._running.get(container_id)
        if host is None:
            raise ContainerNotRunning(container_id)
        block = self.block_map.block(block_id)
        if not block.replicas:
            raise NoSuchBlock(f"{block_id} has no replicas")
        replica = next((r for r in block.replicas if r.host == host), block.replicas[0])

        key = PipeKey(host, self._allocate_port(host), replica.host, DATANODE_PORT)
        pipe = Pipe(
            key=key,
            container_id=container_id,
            block_id=block_id,
            dn_host=replica.host,
            disk_id=replica.disk_id,
            size=block.size,
            start_time=now,
            tcp_demand=self.params.aimd_initial,
        )
        self._pipes.append(pipe)
        self._active[key] = pipe
        log.debug("Opened pipe %s for %s block %s", key, container_id, block_id)
        return pipe

    def pipes(self) -> List[Pipe]:
        return list(self._pipes)

    def active_pipes(self) -> List[Pipe]:
        return sorted(self._active.values(), key=Pipe.seniority)

    def connection_table(self, host: str) -> List[ConnectionRecord]:
        self._require_host(host)
        records = [
            ConnectionRecord(p.key, p.container_id, p.start_time)
            for p in self._active.values()
            if p.key.src_host == host
        ]
        return sorted(records, key=lambda r: r.key.render())

    def shaper(self, host: str) -> TrafficShaper:
        shaper = self.shapers.get(host)
        if shaper is None:
            raise NoSuchHost(f"{host} runs no DataNode")
        return shaper

    # Data plane

    def advance(self, dt: float, now: Optional[float] = None) -> StepReport:
        """
        Move every active pipe through the interval ending at `now`.

        Args:
            dt: step length in seconds
            now: end of the interval; defaults to the previous time plus dt

        Returns:
            The per-pipe deliveries and the pipes that closed in this step.
        """
        if dt <= 0:
            raise ValueError("dt must be > 0")
        self.now = self.now + dt if now is None else now
        report = StepReport(time=self.now, dt=dt)
        pipes = self.active_pipes()
        if not pipes:
            return report

        disk_budget = self._disk_budgets(dt)
        nic_budget = {
            host: m.nic_capacity * dt
            for host, m in self.machines.items()
            if m.nic_capacity is not None
        }

        outcomes = []
        for pipe in pipes:
            requested = pipe.tcp_demand * dt
            limit = min(requested, pipe.remaining)
            shaper = self.shapers[pipe.dn_host]
            allowed = shaper.grant(shaper.classify(pipe.key), requested, self.now)
            want = min(allowed, pipe.remaining)

            disk = (pipe.dn_host, pipe.disk_id)
            granted = min(want, disk_budget[disk])
            limiter = "disk" if granted < want else None
            if not pipe.is_local and pipe.dn_host in nic_budget:
                if nic_budget[pipe.dn_host] < granted:
                    granted = nic_budget[pipe.dn_host]
                    limiter = "nic"
                nic_budget[pipe.dn_host] -= granted
            disk_budget[disk] -= granted
            outcomes.append((pipe, limit, granted, limiter))

        short_on_disk: Dict[Tuple[str, str], int] = defaultdict(int)
        for pipe, limit, granted, limiter in outcomes:
            if limiter == "disk" and self._is_short(granted, limit):
                short_on_disk[(pipe.dn_host, pipe.disk_id)] += 1

        for pipe, limit, granted, limiter in outcomes:
            congested = short_on_disk[(pipe.dn_host, pipe.disk_id)] >= 2
            congested = congested and limiter == "disk"
            self._update_demand(pipe, limit, granted, dt, congested)
            if granted >= pipe.remaining:
                pipe.bytes_delivered = float(pipe.size)
            else:
                pipe.bytes_delivered += granted
            report.deliveries.append(
                Delivery(
                    key=pipe.key,
                    container_id=pipe.container_id,
                    dn_host=pipe.dn_host,
                    disk_id=pipe.disk_id,
                    delivered=granted,
                    rate=granted / dt,
                )
            )
            if pipe.bytes_delivered >= pipe.size:
                self._close(pipe, self.now)
                report.closed.append(pipe)
        return report

    def _disk_budgets(self, dt: float) -> Dict[Tuple[str, str], float]:
        budgets = {}
        jitter = self.params.read_jitter
        for host in sorted(self.machines):
            for disk in self.machines[host].disks:
                factor = 1.0
                if jitter > 0:
                    factor = self._rng.uniform(1.0 - jitter, 1.0)
                budgets[(host, disk.disk_id)] = disk.capacity * dt * factor
        return budgets

    @staticmethod
    def _is_short(granted: float, limit: float) -> bool:
        return granted < limit * (1.0 - MATCH_TOLERANCE)

    def _update_demand(
        self, pipe: Pipe, limit: float, granted: float, dt: float, congested: bool
    ) -> None:
        p = self.params
        if not self._is_short(granted, limit):
            if pipe.slow_start:
                pipe.tcp_demand *= 2
            else:
                pipe.tcp_demand += p.aimd_increase * dt
            return
        pipe.slow_start = False
        if congested:
            pipe.tcp_demand *= p.aimd_beta
        else:
            # Settle at the bottleneck rate
            pipe.tcp_demand = max(granted / dt, pipe.tcp_demand * p.aimd_beta)

    def _close(self, pipe: Pipe, now: float) -> None:
        pipe.state = PipeState.CLOSED
        pipe.closed_at = now
        self._active.pop(pipe.key, None)
        log.debug("Closed pipe %s after %.0f bytes", pipe.key, pipe.bytes_delivered)

    def _allocate_port(self, host: str) -> int:
        port = self._next_port[host]
        if port > EPHEMERAL_PORT_LIMIT:
            raise ClusterError(f"Ephemeral ports exhausted on {host}")
        self._next_port[host] = port + 1
        return port

    def _require_host(self, host: str) -> None:
        if host not in self.machines:
            raise NoSuchHost(host)


def build_cluster(scenario: "ScenarioConfig") -> Cluster:
    """Build the initial cluster (t=0, no pipes) from a scenario."""
    machines: List[Machine] = []
    seen_hosts = set()
    for mc in scenario.machines:
        if mc.host in seen_hosts:
            raise InvalidScenario(f"machines: duplicate host {mc.host!r}")
        seen_hosts.add(mc.host)
        disk_ids = set()
        disks = []
        for dc in mc.disks:
            if dc.disk_id in disk_ids:
                raise InvalidScenario(
                    f"machines.{mc.host}: duplicate disk {dc.disk_id!r}"
                )
            if dc.capacity <= 0:
                raise InvalidScenario(
                    f"machines.{mc.host}.disks.{dc.disk_id}: capacity must be > 0"
                )
            disk_ids.add(dc.disk_id)
            disks.append(Disk(dc.disk_id, float(dc.capacity)))
        if mc.runs_datanode and not disks:
            raise InvalidScenario(
                f"machines.{mc.host}: a DataNode needs at least one disk"
            )
        if mc.nic_capacity is not None and mc.nic_capacity <= 0:
            raise InvalidScenario(f"machines.{mc.host}: nic_capacity must be > 0")
        machines.append(
            Machine(
                host=mc.host,
                vcores=mc.vcores,
                memory=mc.memory,
                disks=disks,
                runs_datanode=mc.runs_datanode,
                runs_nodemanager=mc.runs_nodemanager,
                nic_capacity=mc.nic_capacity,
            )
        )

    by_host = {m.host: m for m in machines}
    files: Dict[str, List[Block]] = {}
    block_ids = set()
    for fc in scenario.files:
        if fc.name in files:
            raise InvalidScenario(f"files: duplicate file {fc.name!r}")
        blocks = []
        for bc in fc.blocks:
            where = f"files.{fc.name}.blocks.{bc.block_id}"
            if bc.block_id in block_ids:
                raise InvalidScenario(f"{where}: duplicate block id")
            if bc.size <= 0:
                raise InvalidScenario(f"{where}: size must be > 0")
            if not bc.replicas:
                raise InvalidScenario(f"{where}: at least one replica is required")
            for rc in bc.replicas:
                machine = by_host.get(rc.host)
                if machine is None or not machine.runs_datanode:
                    raise InvalidScenario(
                        f"{where}: replica host {rc.host!r} is not a DataNode"
                    )
                if machine.disk(rc.disk_id) is None:
                    raise InvalidScenario(
                        f"{where}: disk {rc.disk_id!r} does not exist on {rc.host}"
                    )
            block_ids.add(bc.block_id)
            blocks.append(
                Block(
                    bc.block_id,
                    bc.size,
                    tuple(ReplicaLocation(r.host, r.disk_id) for r in bc.replicas),
                )
            )
        files[fc.name] = blocks

    params = scenario.parameters
    return Cluster(
        machines,
        BlockMap(files),
        ClusterParams(
            aimd_increase=params.aimd_increase,
            aimd_beta=params.aimd_beta,
            aimd_initial=params.aimd_initial,
            read_jitter=params.read_jitter,
            seed=params.seed,
            overhead_factor=params.overhead_factor,
        ),
    )
