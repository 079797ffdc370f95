"""
Control plane agents wired through the coordination store.

NodeManager side: ConnectionMonitor turns the host's connection table into
per-DataNode settings documents and TrafficControlDataSubmitter writes them to
`/tcData/DN_<dn>/NM_<nm>`. DataNode side: TrafficControlDataCollector watches
its `/tcData/DN_<dn>` subtree, diffs each NodeManager's document against the
previous one and hands the events to TrafficControlExecutor, which programs the
host's traffic shaper.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import (
    Callable,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Optional,
    Protocol,
    Set,
    Tuple,
)

from .coordstore import (
    CoordinationStore,
    NodeExists,
    NodeMode,
    NoParent,
    NoSuchNode,
    SessionId,
    WatchEvent,
    ZPath,
)
from .resource_manager import ResourceManager
from .shaper import RULE_PRIORITY, KeyPattern, PipeKey, TrafficShaper, default_burst
from .simcluster import Cluster

log = logging.getLogger(__name__)

TC_ROOT = ZPath(("tcData",))
DN_PREFIX = "DN_"
NM_PREFIX = "NM_"


class ControlError(Exception):
    """Base class for control plane errors"""


class DataNodeUnregistered(ControlError):
    pass


class SettingsParseError(ControlError):
    pass


def dn_path(dn_id: str) -> ZPath:
    return TC_ROOT.child(DN_PREFIX + dn_id)


def nm_path(dn_id: str, nm_id: str) -> ZPath:
    return dn_path(dn_id).child(NM_PREFIX + nm_id)


@dataclass(frozen=True)
class RateSetting:
    container_id: str
    key: PipeKey
    rate: int
    burst: int

    def __post_init__(self):
        if not self.container_id or any(c.isspace() for c in self.container_id):
            raise ValueError(f"Invalid container id {self.container_id!r}")
        for name in ("rate", "burst"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    def render(self) -> str:
        k = self.key
        return (
            f"{self.container_id} {k.src_host}:{k.src_port} "
            f"{k.dst_host}:{k.dst_port} {self.rate} {self.burst}"
        )


_INT = r"[1-9][0-9]*"
_LINE = re.compile(
    rf"^(\S+) ([^\s:]+):({_INT}) ([^\s:]+):({_INT}) ({_INT}) ({_INT})$"
)


def setting_rate(io_rate: float) -> int:
    """Whole bytes per second for a class rate; never below 1"""
    return max(1, int(round(io_rate)))


def serialize_settings(settings: Iterable[RateSetting]) -> bytes:
    settings = list(settings)
    keys = [s.key for s in settings]
    if len(set(keys)) != len(keys):
        raise ValueError("Duplicate pipe keys in settings")
    return "".join(line + "\n" for line in sorted(s.render() for s in settings)).encode(
        "ascii"
    )


def parse_settings(data: bytes) -> FrozenSet[RateSetting]:
    """Parse a canonical settings document; anything non-canonical is an error"""
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as e:
        raise SettingsParseError(f"Not ASCII: {e}")
    if not text:
        return frozenset()
    if not text.endswith("\n"):
        raise SettingsParseError("Document must end with a newline")

    lines = text[:-1].split("\n")
    if lines != sorted(lines) or len(set(lines)) != len(lines):
        raise SettingsParseError("Lines are not sorted and unique")
    settings: Dict[PipeKey, RateSetting] = {}
    for i, line in enumerate(lines, 1):
        m = _LINE.match(line)
        if m is None:
            raise SettingsParseError(f"Line {i}: malformed: {line!r}")
        cid, sh, sp, dh, dp, rate, burst = m.groups()
        try:
            setting = RateSetting(
                cid, PipeKey(sh, int(sp), dh, int(dp)), int(rate), int(burst)
            )
        except ValueError as e:
            raise SettingsParseError(f"Line {i}: {e}")
        if setting.key in settings:
            raise SettingsParseError(f"Line {i}: duplicate pipe {setting.key}")
        settings[setting.key] = setting
    return frozenset(settings.values())


@dataclass(frozen=True)
class SettingsDocument:
    nm_id: str
    dn_id: str
    settings: FrozenSet[RateSetting] = frozenset()

    @property
    def serialized(self) -> bytes:
        return serialize_settings(self.settings)

    @classmethod
    def parse(cls, nm_id: str, dn_id: str, data: bytes) -> "SettingsDocument":
        return cls(nm_id, dn_id, parse_settings(data))


class TrafficEventKind(Enum):
    REMOVE = "RemoveRule"
    MODIFY = "ModifyRule"
    ADD = "AddRule"


_KIND_ORDER = {
    TrafficEventKind.REMOVE: 0,
    TrafficEventKind.MODIFY: 1,
    TrafficEventKind.ADD: 2,
}


@dataclass(frozen=True)
class TrafficEvent:
    kind: TrafficEventKind
    setting: RateSetting

    def sort_key(self) -> Tuple[int, str]:
        return (_KIND_ORDER[self.kind], self.setting.key.render())


def diff(old: Iterable[RateSetting], new: Iterable[RateSetting]) -> List[TrafficEvent]:
    before = {s.key: s for s in old}
    after = {s.key: s for s in new}
    events = []
    for key, setting in before.items():
        if key not in after:
            events.append(TrafficEvent(TrafficEventKind.REMOVE, setting))
    for key, setting in after.items():
        prev = before.get(key)
        if prev is None:
            events.append(TrafficEvent(TrafficEventKind.ADD, setting))
        elif (prev.rate, prev.burst) != (setting.rate, setting.burst):
            events.append(TrafficEvent(TrafficEventKind.MODIFY, setting))
    return sorted(events, key=TrafficEvent.sort_key)


def apply_events(
    settings: Iterable[RateSetting], events: Iterable[TrafficEvent]
) -> FrozenSet[RateSetting]:
    """Replay diff output over a settings set"""
    current = {s.key: s for s in settings}
    for event in events:
        if event.kind is TrafficEventKind.REMOVE:
            current.pop(event.setting.key, None)
        else:
            current[event.setting.key] = event.setting
    return frozenset(current.values())


class ControlObserver(Protocol):
    """Receives control-loop milestones per pipe; used for timeline measurement"""

    def detected(self, key: PipeKey, now: float) -> None: ...

    def written(self, key: PipeKey, now: float) -> None: ...

    def applied(self, key: PipeKey, now: float) -> None: ...


class ConnectionMonitor:
    def __init__(
        self,
        nm_host: str,
        cluster: Cluster,
        resource_manager: ResourceManager,
        observer: Optional[ControlObserver] = None,
    ):
        self.nm_host = nm_host
        self.cluster = cluster
        self.resource_manager = resource_manager
        self.observer = observer
        self._known_dns: Set[str] = set()

    def monitor_tick(self, now: float) -> Dict[str, SettingsDocument]:
        grouped: Dict[str, List[RateSetting]] = {}
        for record in self.cluster.connection_table(self.nm_host):
            entry = self.resource_manager.registry_lookup(record.container_id)
            if entry is None or entry.io_rate <= 0:
                continue
            rate = setting_rate(entry.io_rate)
            cls = self.resource_manager.container_class(entry.class_name)
            burst = cls.burst if cls.burst is not None else default_burst(rate)
            burst = int(round(burst))
            setting = RateSetting(record.container_id, record.key, rate, max(burst, 1))
            grouped.setdefault(record.key.dst_host, []).append(setting)
            if self.observer is not None:
                self.observer.detected(record.key, now)

        self._known_dns.update(grouped)
        return {
            dn: SettingsDocument(self.nm_host, dn, frozenset(grouped.get(dn, ())))
            for dn in sorted(self._known_dns)
        }


class TrafficControlDataSubmitter:
    def __init__(
        self,
        nm_id: str,
        store: CoordinationStore,
        session: SessionId,
        observer: Optional[ControlObserver] = None,
    ):
        self.nm_id = nm_id
        self.store = store
        self.session = session
        self.observer = observer
        self.writes = 0
        self._last_written: Dict[str, bytes] = {}

    def submit(self, documents: Dict[str, SettingsDocument], now: float = 0.0) -> int:
        """Write changed documents; returns the number of store writes"""
        writes = 0
        for dn_id in sorted(documents):
            doc = documents[dn_id]
            data = doc.serialized
            if data == self._last_written.get(dn_id, b""):
                continue
            path = nm_path(dn_id, self.nm_id)
            if self.store.exists(self.session, path) is None:
                try:
                    self.store.create(self.session, path, data, NodeMode.EPHEMERAL)
                except NoParent:
                    raise DataNodeUnregistered(dn_id)
            else:
                self.store.set_data(self.session, path, data)
            self._last_written[dn_id] = data
            writes += 1
            log.debug(
                "NM %s wrote %d settings for DN %s",
                self.nm_id,
                len(doc.settings),
                dn_id,
            )
            if self.observer is not None:
                for setting in doc.settings:
                    self.observer.written(setting.key, now)
        self.writes += writes
        return writes


class TrafficControlDataCollector:
    """
    Watches `/tcData/DN_<dn_id>` and its NodeManager children.

    Every watch event re-arms the corresponding watch and re-reads in the same
    call, so a change made between a notification and the re-read is never
    lost.
    """

    def __init__(
        self,
        dn_id: str,
        store: CoordinationStore,
        session: SessionId,
        on_events: Callable[[List[TrafficEvent]], None],
    ):
        self.dn_id = dn_id
        self.store = store
        self.session = session
        self.on_events = on_events
        self.parse_errors = 0
        self.previous: Dict[str, FrozenSet[RateSetting]] = {}
        self.store.set_watcher(session, self.handle)

    @property
    def path(self) -> ZPath:
        return dn_path(self.dn_id)

    def start(self) -> None:
        """Register the DataNode under /tcData and arm the watches"""
        for path in (TC_ROOT, self.path):
            try:
                self.store.create(self.session, path)
            except NodeExists:
                pass
        self._refresh_children()

    def handle(self, event: WatchEvent) -> None:
        log.debug("DN %s got %s on %s", self.dn_id, event.kind.value, event.path)
        if event.path == self.path:
            self._refresh_children()
        elif event.path.parent == self.path and event.path.name.startswith(NM_PREFIX):
            self._refresh_child(event.path.name)

    def _refresh_children(self) -> None:
        try:
            children = self.store.get_children(
                self.session, self.path, register_watch=True
            )
        except NoSuchNode:
            log.warning("DN %s registration node vanished", self.dn_id)
            children = []
        names = {c for c in children if c.startswith(NM_PREFIX)}
        for name in sorted(names):
            if name[len(NM_PREFIX):] not in self.previous:
                self._refresh_child(name)
        for nm_id in sorted(self.previous):
            if NM_PREFIX + nm_id not in names:
                self._update(nm_id, frozenset())

    def _refresh_child(self, name: str) -> None:
        nm_id = name[len(NM_PREFIX):]
        try:
            data, _ = self.store.get_data(
                self.session, self.path.child(name), register_watch=True
            )
        except NoSuchNode:
            self._update(nm_id, frozenset())
            return
        try:
            current = parse_settings(data)
        except SettingsParseError as e:
            self.parse_errors += 1
            log.warning("DN %s ignoring document from NM %s: %s", self.dn_id, nm_id, e)
            self.previous.setdefault(nm_id, frozenset())
            return
        self._update(nm_id, current)

    def _update(self, nm_id: str, current: FrozenSet[RateSetting]) -> None:
        events = diff(self.previous.get(nm_id, frozenset()), current)
        if current:
            self.previous[nm_id] = current
        else:
            self.previous.pop(nm_id, None)
        if events:
            self.on_events(events)


class TrafficControlExecutor:
    def __init__(
        self,
        dn_host: str,
        shaper: TrafficShaper,
        observer: Optional[ControlObserver] = None,
    ):
        self.dn_host = dn_host
        self.shaper = shaper
        self.observer = observer
        self.inconsistencies = 0
        self.rules: Dict[PipeKey, Tuple[str, RateSetting]] = {}
        self._minor = 0

    def execute(self, events: Iterable[TrafficEvent], now: float) -> None:
        for event in events:
            setting = event.setting
            if event.kind is TrafficEventKind.REMOVE:
                self._remove(setting)
            elif setting.key in self.rules:
                self._modify(setting, now)
            else:
                if event.kind is TrafficEventKind.MODIFY:
                    self._inconsistent(
                        "ModifyRule for unknown pipe %s; installing it", setting
                    )
                self._add(setting, now)

    def expected_filters(self) -> Dict[PipeKey, int]:
        return {key: s.rate for key, (_, s) in self.rules.items()}

    def _add(self, setting: RateSetting, now: float) -> None:
        self._minor += 1
        class_id = f"1:{self._minor}"
        self.shaper.configure_class(class_id, setting.rate, setting.burst, now=now)
        self.shaper.add_filter(KeyPattern.exact(setting.key), class_id, RULE_PRIORITY)
        self.rules[setting.key] = (class_id, setting)
        log.debug(
            "DN %s shaping %s at %d B/s (%s)",
            self.dn_host,
            setting.key,
            setting.rate,
            class_id,
        )
        if self.observer is not None:
            self.observer.applied(setting.key, now)

    def _modify(self, setting: RateSetting, now: float) -> None:
        class_id, current = self.rules[setting.key]
        if current == setting:
            return
        self.shaper.configure_class(class_id, setting.rate, setting.burst, now=now)
        self.rules[setting.key] = (class_id, setting)
        log.debug(
            "DN %s reshaped %s to %d B/s", self.dn_host, setting.key, setting.rate
        )

    def _remove(self, setting: RateSetting) -> None:
        rule = self.rules.pop(setting.key, None)
        if rule is None:
            self._inconsistent("RemoveRule for unknown pipe %s; skipped", setting)
            return
        class_id, _ = rule
        self.shaper.remove_filter(KeyPattern.exact(setting.key), class_id)
        self.shaper.remove_class(class_id)
        log.debug("DN %s stopped shaping %s", self.dn_host, setting.key)

    def _inconsistent(self, message: str, setting: RateSetting) -> None:
        self.inconsistencies += 1
        log.warning("DN %s: " + message, self.dn_host, setting.key)
