"""Shared-variable store ("controls") with subscriptions and event triggering.

Controls are the cross-category coupling channel: transforms read or write
them during dispatch, the CPU monitor publishes load into them, and the
operator edits them live through the admin API. Values are primitives only
(string, boolean, number); versions are per-name, strictly increasing, and
survive deletion so stale updates are detectable.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .errors import InvalidType

Primitive = Union[str, bool, int, float]

DEFAULT_SUBSCRIBER_BUFFER = 10_000


def _check_primitive(value) -> None:
    if not isinstance(value, (str, bool, int, float)):
        raise InvalidType(f"control values must be string, boolean or number, got {type(value).__name__}")


@dataclass
class ControlEntry:
    name: str
    value: Primitive
    version: int
    updated_at: float  # epoch ms


@dataclass
class ControlEvent:
    name: str
    kind: str  # updated | deleted | triggered
    old_value: Optional[Primitive] = None
    new_value: Optional[Primitive] = None
    version: int = 0

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "old_value": self.old_value,
            "new_value": self.new_value,
            "version": self.version,
        }


@dataclass
class Subscription:
    """Pull-style event stream for one pattern.

    Events are enqueued in bus order; a full buffer drops the oldest event
    and counts the drop rather than blocking the writer.
    """

    pattern: str
    capacity: int = DEFAULT_SUBSCRIBER_BUFFER
    dropped: int = 0
    _events: deque = field(default_factory=deque)
    _cond: threading.Condition = field(default_factory=threading.Condition)
    _closed: bool = False

    def matches(self, name: str) -> bool:
        if self.pattern.endswith("*"):
            return name.startswith(self.pattern[:-1])
        return name == self.pattern

    def _push(self, event: ControlEvent) -> None:
        with self._cond:
            if len(self._events) >= self.capacity:
                self._events.popleft()
                self.dropped += 1
            self._events.append(event)
            self._cond.notify_all()

    def poll(self) -> list[ControlEvent]:
        """Drain everything queued so far without blocking."""
        with self._cond:
            out = list(self._events)
            self._events.clear()
            return out

    def next(self, timeout: float | None = None) -> Optional[ControlEvent]:
        """Block until one event is available (or timeout/closed)."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._events:
                if self._closed:
                    return None
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self._cond.wait(remaining)
            return self._events.popleft()

    def __iter__(self) -> Iterator[ControlEvent]:
        while True:
            ev = self.next()
            if ev is None:
                return
            yield ev

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class ControlsBus:
    """Thread-safe key/value bus with per-name version ordering.

    Store mutation and event enqueueing happen atomically under one lock, so
    any subscriber observes versions for a given name in strictly increasing
    order. No user code runs under the lock (subscriptions are pull-based).
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, ControlEntry] = {}
        self._versions: dict[str, int] = {}  # survives deletion, never reused
        self._subs: list[Subscription] = []

    # -- core operations --------------------------------------------------

    def set(self, name: str, value: Primitive) -> int:
        if not name:
            raise InvalidType("control name must be non-empty")
        _check_primitive(value)
        with self._lock:
            old = self._entries.get(name)
            version = self._versions.get(name, 0) + 1
            self._versions[name] = version
            self._entries[name] = ControlEntry(name, value, version, time.time() * 1000.0)
            event = ControlEvent(name, "updated",
                                 old_value=old.value if old else None,
                                 new_value=value, version=version)
            self._fanout(event)
        return version

    def get(self, name: str) -> Optional[Primitive]:
        with self._lock:
            entry = self._entries.get(name)
            return entry.value if entry else None

    def entry(self, name: str) -> Optional[ControlEntry]:
        with self._lock:
            return self._entries.get(name)

    def delete(self, name: str) -> bool:
        with self._lock:
            entry = self._entries.pop(name, None)
            if entry is None:
                return False
            event = ControlEvent(name, "deleted", old_value=entry.value,
                                 new_value=None, version=entry.version)
            self._fanout(event)
            return True

    def subscribe(self, pattern: str, capacity: int = DEFAULT_SUBSCRIBER_BUFFER) -> Subscription:
        sub = Subscription(pattern=pattern, capacity=capacity)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)
        sub.close()

    def trigger(self, event_name: str, payload: Primitive) -> int:
        """Deliver a transient event; nothing is stored."""
        _check_primitive(payload)
        with self._lock:
            event = ControlEvent(event_name, "triggered", new_value=payload,
                                 version=self._versions.get(event_name, 0))
            return self._fanout(event)

    # -- views -------------------------------------------------------------

    def snapshot(self) -> dict[str, Primitive]:
        with self._lock:
            return {name: e.value for name, e in self._entries.items()}

    def entries(self) -> list[ControlEntry]:
        with self._lock:
            return sorted(self._entries.values(), key=lambda e: e.name)

    # -- internal ------------------------------------------------------------

    def _fanout(self, event: ControlEvent) -> int:
        delivered = 0
        for sub in self._subs:
            if sub.matches(event.name):
                sub._push(event)
                delivered += 1
        return delivered


class ControlsHandle:
    """What a transform sees as its ``controls`` binding: read, write,
    delete, trigger, plus a point-in-time snapshot."""

    def __init__(self, bus: ControlsBus):
        self._bus = bus

    def get(self, name: str) -> Optional[Primitive]:
        return self._bus.get(name)

    def set(self, name: str, value: Primitive) -> int:
        return self._bus.set(name, value)

    def delete(self, name: str) -> bool:
        return self._bus.delete(name)

    def trigger(self, name: str, payload: Primitive) -> int:
        return self._bus.trigger(name, payload)

    def snapshot(self) -> dict[str, Primitive]:
        return self._bus.snapshot()
