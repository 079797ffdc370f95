"""
In-process coordination store: zNodes, sessions and one-time watches
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Callable, Deque, Dict, List, Optional, Set, Tuple, Union

log = logging.getLogger(__name__)


class CoordStoreError(Exception):
    """Base class for coordination store errors"""


class NoSuchSession(CoordStoreError):
    pass


class NoParent(CoordStoreError):
    pass


class NodeExists(CoordStoreError):
    pass


class EphemeralParent(CoordStoreError):
    pass


class NoSuchNode(CoordStoreError):
    pass


class NotEmpty(CoordStoreError):
    pass


class InvalidPath(CoordStoreError):
    pass


@dataclass(frozen=True, order=True)
class ZPath:
    """Hierarchical path; the root is the empty segment tuple and renders as `/`"""

    segments: Tuple[str, ...] = ()

    def __post_init__(self):
        for segment in self.segments:
            if not segment or "/" in segment:
                raise InvalidPath(f"Invalid path segment: {segment!r}")

    @classmethod
    def parse(cls, text: str) -> "ZPath":
        if not text.startswith("/"):
            raise InvalidPath(f"Path must be absolute: {text!r}")
        if text == "/":
            return cls()
        parts = text[1:].split("/")
        if any(not part for part in parts):
            raise InvalidPath(f"Empty segment in path: {text!r}")
        return cls(tuple(parts))

    @property
    def is_root(self) -> bool:
        return not self.segments

    @property
    def name(self) -> str:
        return self.segments[-1] if self.segments else ""

    @property
    def parent(self) -> "ZPath":
        if self.is_root:
            raise InvalidPath("The root has no parent")
        return ZPath(self.segments[:-1])

    def child(self, name: str) -> "ZPath":
        return ZPath(self.segments + (name,))

    def __str__(self) -> str:
        return "/" + "/".join(self.segments)


ROOT = ZPath()
PathLike = Union[ZPath, str]


class NodeMode(Enum):
    PERSISTENT = "persistent"
    EPHEMERAL = "ephemeral"


@dataclass(frozen=True, order=True)
class SessionId:
    token: int

    def __str__(self) -> str:
        return f"0x{self.token:08x}"


@dataclass
class ZNode:
    path: ZPath
    data: bytes
    mode: NodeMode
    owner: Optional[SessionId] = None
    version: int = 0
    children: Set[str] = field(default_factory=set)


class WatchKind(Enum):
    DATA_CHANGED = "DataChanged"
    NODE_CREATED = "NodeCreated"
    NODE_DELETED = "NodeDeleted"
    CHILDREN_CHANGED = "ChildrenChanged"


@dataclass(frozen=True)
class WatchEvent:
    """One fired watch; `session` is the session that registered it"""

    kind: WatchKind
    path: ZPath
    delivery_time: float
    session: SessionId


Watcher = Callable[[WatchEvent], None]
Dispatch = Callable[[float, Callable[[], None]], None]


def _as_path(path: PathLike) -> ZPath:
    return path if isinstance(path, ZPath) else ZPath.parse(path)


class CoordinationStore:
    """
    Single-server coordination service.

    Mutations are atomic whole-value swaps. Watches are one-time: a
    registration fires at most once and is then discarded. Events are never
    delivered inside the mutating call; they go through `dispatch` (the event
    engine) when one is given, otherwise into a local queue emptied by
    `drain()`.
    """

    def __init__(
        self,
        watch_latency: float = 0.01,
        clock: Optional[Callable[[], float]] = None,
        dispatch: Optional[Dispatch] = None,
    ):
        if watch_latency < 0:
            raise ValueError("watch_latency must be >= 0")
        self.watch_latency = watch_latency
        self._clock = clock or (lambda: 0.0)
        self._dispatch = dispatch
        self._nodes: Dict[ZPath, ZNode] = {
            ROOT: ZNode(path=ROOT, data=b"", mode=NodeMode.PERSISTENT)
        }
        self._sessions: Dict[SessionId, Optional[Watcher]] = {}
        self._ephemerals: Dict[SessionId, Set[ZPath]] = {}
        # path -> {session: registration sequence number}
        self._data_watches: Dict[ZPath, Dict[SessionId, int]] = {}
        self._child_watches: Dict[ZPath, Dict[SessionId, int]] = {}
        self._session_ids = itertools.count(1)
        self._registrations = itertools.count(1)
        self._outbox: Deque[WatchEvent] = deque()

    # Sessions

    def open_session(self, watcher: Optional[Watcher] = None) -> SessionId:
        session = SessionId(next(self._session_ids))
        self._sessions[session] = watcher
        self._ephemerals[session] = set()
        log.debug("Opened session %s", session)
        return session

    def set_watcher(self, session: SessionId, watcher: Optional[Watcher]) -> None:
        self._require_session(session)
        self._sessions[session] = watcher

    def close_session(self, session: SessionId) -> None:
        self._require_session(session)
        for table in (self._data_watches, self._child_watches):
            for path in list(table):
                table[path].pop(session, None)
                if not table[path]:
                    del table[path]
        for path in sorted(self._ephemerals[session], key=str):
            self._remove_node(path)
        del self._ephemerals[session]
        del self._sessions[session]
        log.debug("Closed session %s", session)

    def ephemerals(self, session: SessionId) -> List[ZPath]:
        self._require_session(session)
        return sorted(self._ephemerals[session], key=str)

    # Node operations

    def create(
        self,
        session: SessionId,
        path: PathLike,
        data: bytes = b"",
        mode: NodeMode = NodeMode.PERSISTENT,
    ) -> int:
        self._require_session(session)
        path = _as_path(path)
        if path in self._nodes:
            raise NodeExists(str(path))
        parent = self._nodes.get(path.parent)
        if parent is None:
            raise NoParent(str(path))
        if parent.mode is NodeMode.EPHEMERAL:
            raise EphemeralParent(str(path))

        owner = session if mode is NodeMode.EPHEMERAL else None
        self._nodes[path] = ZNode(path=path, data=bytes(data), mode=mode, owner=owner)
        parent.children.add(path.name)
        if owner is not None:
            self._ephemerals[owner].add(path)

        self._fire(
            self._take(self._data_watches, path, WatchKind.NODE_CREATED)
            + self._take(self._child_watches, parent.path, WatchKind.CHILDREN_CHANGED)
        )
        return 0

    def set_data(self, session: SessionId, path: PathLike, data: bytes) -> int:
        self._require_session(session)
        node = self._require_node(_as_path(path))
        node.data = bytes(data)
        node.version += 1
        self._fire(self._take(self._data_watches, node.path, WatchKind.DATA_CHANGED))
        return node.version

    def get_data(
        self, session: SessionId, path: PathLike, register_watch: bool = False
    ) -> Tuple[bytes, int]:
        self._require_session(session)
        node = self._require_node(_as_path(path))
        if register_watch:
            self._arm(self._data_watches, node.path, session)
        return node.data, node.version

    def exists(
        self, session: SessionId, path: PathLike, register_watch: bool = False
    ) -> Optional[int]:
        self._require_session(session)
        path = _as_path(path)
        if register_watch:
            self._arm(self._data_watches, path, session)
        node = self._nodes.get(path)
        return node.version if node is not None else None

    def get_children(
        self, session: SessionId, path: PathLike, register_watch: bool = False
    ) -> List[str]:
        self._require_session(session)
        node = self._require_node(_as_path(path))
        if register_watch:
            self._arm(self._child_watches, node.path, session)
        return sorted(node.children)

    def delete(self, session: SessionId, path: PathLike) -> None:
        self._require_session(session)
        path = _as_path(path)
        if path.is_root:
            raise InvalidPath("The root cannot be deleted")
        node = self._require_node(path)
        if node.children:
            raise NotEmpty(str(path))
        self._remove_node(path)

    # Event delivery

    def drain(self) -> int:
        """Deliver queued events in order; only used without an engine"""
        delivered = 0
        while self._outbox:
            self._deliver(self._outbox.popleft())
            delivered += 1
        return delivered

    def pending_watches(self, session: SessionId) -> int:
        return sum(
            session in table[path]
            for table in (self._data_watches, self._child_watches)
            for path in table
        )

    # Internals

    def _require_session(self, session: SessionId) -> None:
        if session not in self._sessions:
            raise NoSuchSession(str(session))

    def _require_node(self, path: ZPath) -> ZNode:
        node = self._nodes.get(path)
        if node is None:
            raise NoSuchNode(str(path))
        return node

    def _remove_node(self, path: ZPath) -> None:
        node = self._nodes.pop(path)
        self._nodes[path.parent].children.discard(path.name)
        if node.owner is not None:
            self._ephemerals[node.owner].discard(path)
        self._fire(
            self._take(self._data_watches, path, WatchKind.NODE_DELETED)
            + self._take(self._child_watches, path, WatchKind.NODE_DELETED)
            + self._take(self._child_watches, path.parent, WatchKind.CHILDREN_CHANGED)
        )

    def _arm(
        self, table: Dict[ZPath, Dict[SessionId, int]], path: ZPath, session: SessionId
    ) -> None:
        # A pending registration is kept as is; re-arming does not duplicate it.
        table.setdefault(path, {}).setdefault(session, next(self._registrations))

    @staticmethod
    def _take(
        table: Dict[ZPath, Dict[SessionId, int]], path: ZPath, kind: WatchKind
    ) -> List[Tuple[int, SessionId, WatchKind, ZPath]]:
        registered = table.pop(path, {})
        return [(seq, session, kind, path) for session, seq in registered.items()]

    def _fire(self, triggered: List[Tuple[int, SessionId, WatchKind, ZPath]]) -> None:
        delivery_time = self._clock() + self.watch_latency
        for _, session, kind, path in sorted(triggered, key=lambda item: item[0]):
            event = WatchEvent(
                kind=kind, path=path, delivery_time=delivery_time, session=session
            )
            log.debug("Watch fired: %s %s -> %s", kind.value, path, session)
            if self._dispatch is not None:
                self._dispatch(self.watch_latency, partial(self._deliver, event))
            else:
                self._outbox.append(event)

    def _deliver(self, event: WatchEvent) -> None:
        if event.session not in self._sessions:
            log.debug("Dropping event for closed session %s", event.session)
            return
        watcher = self._sessions[event.session]
        if watcher is not None:
            watcher(event)
