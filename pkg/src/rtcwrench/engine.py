"""Category registry, transform installation and the dispatch pipeline.

Every intercept point maps to exactly one category; at most one transform is
active per category; dispatch applies it (or nothing) to each payload.
Transform failures never alter the payload and never abort the session —
the pipeline fails open, the way a broken injected script degrades without
taking the call down.
"""

from __future__ import annotations

import logging
import random
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

from .controls import ControlsBus, ControlsHandle
from .errors import InvalidParams, InvalidValue, StrictViolation, UnknownCategory

log = logging.getLogger(__name__)


class CategoryId(str, Enum):
    MEDIA = "Media"
    DEVICES = "Devices"
    SESSION = "Session"
    CONNECT = "Connect"
    NETWORK = "Network"
    STATS = "Stats"
    DATA = "Data"
    SOCKET = "Socket"
    REQUEST = "Request"
    SECURITY = "Security"
    CPU = "Cpu"

    @classmethod
    def parse(cls, name: str) -> "CategoryId":
        for member in cls:
            if member.value.lower() == name.lower():
                return member
        raise UnknownCategory(f"unknown category {name!r}")


# Categories whose contract allows a transform to answer immediately instead
# of forwarding (fake responses, consumed messages, vetoed channels).
SHORT_CIRCUIT_CATEGORIES = frozenset(
    {CategoryId.REQUEST, CategoryId.SOCKET, CategoryId.DATA})

# Binding names a transform may request, per category. The ``controls``
# handle is available everywhere; the rest mirrors each category's
# intercept surface.
CATEGORY_BINDINGS: dict[CategoryId, frozenset[str]] = {
    CategoryId.MEDIA: frozenset({"constraints", "context", "controls"}),
    CategoryId.DEVICES: frozenset({"devices", "controls"}),
    CategoryId.SESSION: frozenset({"id", "connection", "session", "context", "data", "controls"}),
    CategoryId.CONNECT: frozenset({"id", "config", "configuration", "constraints", "data", "controls"}),
    CategoryId.NETWORK: frozenset({"id", "connection", "candidate", "context", "controls"}),
    CategoryId.STATS: frozenset({"id", "connection", "type", "name", "args", "data",
                                 "parsequery", "query", "plot", "compress", "send", "controls"}),
    CategoryId.DATA: frozenset({"id", "connection", "type", "context", "channel",
                                "args", "data", "resolve", "reject", "controls"}),
    CategoryId.SOCKET: frozenset({"socket", "type", "context", "args", "data",
                                  "resolve", "reject", "controls"}),
    CategoryId.REQUEST: frozenset({"context", "args", "xhr", "resolve", "reject",
                                   "data", "controls"}),
    CategoryId.SECURITY: frozenset({"context", "type", "args", "data", "headers", "controls"}),
    CategoryId.CPU: frozenset({"details", "controls"}),
}


class _AbsentType:
    """Marker bound to requested names that have no value in this dispatch."""

    _instance: Optional["_AbsentType"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSENT"

    def __bool__(self):
        return False


ABSENT = _AbsentType()


class Lazy:
    """Defers materialization of an expensive binding until it is requested."""

    def __init__(self, fn: Callable[[], Any]):
        self._fn = fn

    def get(self) -> Any:
        return self._fn()


@dataclass
class TransformSpec:
    category: CategoryId
    builtin: str
    params: dict[str, Any] = field(default_factory=dict)
    requested: list[str] = field(default_factory=list)
    enabled: bool = True

    def to_doc(self) -> dict:
        return {"category": self.category.value, "builtin": self.builtin,
                "params": dict(self.params), "requested": list(self.requested),
                "enabled": self.enabled}

    @classmethod
    def from_doc(cls, doc: dict) -> "TransformSpec":
        return cls(category=CategoryId.parse(doc["category"]),
                   builtin=doc["builtin"],
                   params=dict(doc.get("params", {})),
                   requested=list(doc.get("requested", [])),
                   enabled=bool(doc.get("enabled", True)))


@dataclass
class InterceptContext:
    context: str                 # intercepted method or event name
    kind: str = "method"         # "method" | "event"
    args: list = field(default_factory=list)
    session_id: str = "default"
    state: dict = field(default_factory=dict)
    objects: dict = field(default_factory=dict)  # named objects (connection, channel, ...)

    def __post_init__(self):
        if self.kind not in ("method", "event"):
            raise InvalidValue(f"context kind must be method|event, got {self.kind!r}")


PASS_THROUGH = "pass_through"
MODIFIED = "modified"
SHORT_CIRCUIT = "short_circuit"
FAIL = "fail"


@dataclass
class DispatchOutcome:
    kind: str
    payload: Any = None          # the payload for downstream use (original on fail)
    result: Any = None           # short-circuit result
    error: Optional[str] = None  # failure descriptor

    @property
    def short_circuited(self) -> bool:
        return self.kind == SHORT_CIRCUIT


@dataclass
class EngineSettings:
    strict: bool = False
    stats_interval_ms: int = 1000
    savestats_sink: Optional[str] = None
    seed: Optional[int] = None

    def validate(self) -> None:
        if not isinstance(self.stats_interval_ms, int) or self.stats_interval_ms < 100:
            raise InvalidValue(f"stats_interval_ms must be an integer >= 100, got {self.stats_interval_ms!r}")

    def to_doc(self) -> dict:
        return {"strict": self.strict, "stats_interval_ms": self.stats_interval_ms,
                "savestats_sink": self.savestats_sink, "seed": self.seed}

    @classmethod
    def from_doc(cls, doc: dict) -> "EngineSettings":
        settings = cls(strict=bool(doc.get("strict", False)),
                       stats_interval_ms=doc.get("stats_interval_ms", 1000),
                       savestats_sink=doc.get("savestats_sink"),
                       seed=doc.get("seed"))
        settings.validate()
        return settings


class _ShortCircuit:
    __slots__ = ("done", "value", "rejected")

    def __init__(self):
        self.done = False
        self.value = None
        self.rejected = False

    def resolve(self, value=None):
        self.done = True
        self.value = value

    def reject(self, error=None):
        self.done = True
        self.rejected = True
        self.value = error


class Engine:
    """Owns installed transforms and runs the dispatch pipeline.

    Dispatch for one session id is serialized; installs are atomic with
    respect to dispatch (a dispatch sees the whole transform set before or
    after a change, never half of one).
    """

    def __init__(self, catalog, controls: ControlsBus,
                 settings: Optional[EngineSettings] = None):
        self.catalog = catalog
        self.controls = controls
        self.settings = settings or EngineSettings()
        self.settings.validate()
        self._lock = threading.Lock()
        self._installed: dict[CategoryId, tuple[int, TransformSpec, Any]] = {}
        self._next_handle = 1
        self._state_lock = threading.Lock()
        self._state_docs: dict[str, dict] = {}
        self._session_locks: dict[str, threading.Lock] = {}
        self._dispatch_listeners: list[Callable] = []
        # Binding providers the service layer can wire in (stats helpers).
        self.extra_bindings: dict[str, Any] = {}

    # ------------------------------------------------------------------ install

    def install_transform(self, category: CategoryId, spec: TransformSpec) -> int:
        if spec.category != category:
            raise InvalidParams(f"spec category {spec.category} does not match {category}")
        entry = self.catalog.get(category, spec.builtin)  # raises UnknownBuiltin
        self.catalog.validate_params(entry, spec.params)
        allowed = CATEGORY_BINDINGS[category]
        bad = [name for name in spec.requested if name not in allowed]
        if bad:
            raise InvalidParams(
                f"bindings {bad} not allowed for {category.value}; allowed: {sorted(allowed)}")
        if self.settings.strict and not entry.strict_safe:
            raise StrictViolation(
                f"builtin {spec.builtin!r} is not strict-safe and strict mode is on")
        with self._lock:
            handle = self._next_handle
            self._next_handle += 1
            self._installed[category] = (handle, spec, entry)
        self.controls.trigger("category.changed", category.value)
        return handle

    def uninstall_transform(self, category: CategoryId) -> bool:
        with self._lock:
            existed = self._installed.pop(category, None) is not None
        if existed:
            self.controls.trigger("category.changed", category.value)
        return existed

    def installed(self, category: CategoryId) -> Optional[TransformSpec]:
        with self._lock:
            slot = self._installed.get(category)
            return slot[1] if slot else None

    def installed_specs(self) -> dict[CategoryId, TransformSpec]:
        with self._lock:
            return {cat: spec for cat, (_, spec, _) in self._installed.items()}

    # ------------------------------------------------------------------ dispatch

    def dispatch(self, category: CategoryId, ctx: InterceptContext, payload: Any) -> DispatchOutcome:
        with self._lock:
            slot = self._installed.get(category)
        if slot is None or not slot[1].enabled:
            outcome = DispatchOutcome(PASS_THROUGH, payload=payload)
            self._notify(category, ctx, outcome)
            return outcome

        _, spec, entry = slot
        with self._session_lock(ctx.session_id):
            ctx.state = self._state_doc(ctx.session_id)
            sc = _ShortCircuit()
            try:
                available = self._available_bindings(category, ctx, payload, sc)
                requested = entry.effective_requested(spec)
                values = self.bind_params_by_name(requested, available)
                call = BuiltinCall(payload=payload, ctx=ctx, params=entry.params_with_defaults(spec.params),
                                   bindings=dict(zip(requested, values)),
                                   rng=self._dispatch_rng(category, ctx),
                                   resolve=sc.resolve, reject=sc.reject)
                result = entry.fn(call)
                if sc.done:
                    if category not in SHORT_CIRCUIT_CATEGORIES:
                        raise InvalidValue(
                            f"category {category.value} does not allow immediate resolution")
                    outcome = DispatchOutcome(SHORT_CIRCUIT, payload=payload, result=sc.value)
                else:
                    outcome = DispatchOutcome(MODIFIED, payload=payload if result is None else result)
            except Exception as exc:  # fail open: original payload flows on
                log.warning("transform %s/%s failed: %s", category.value, spec.builtin, exc)
                outcome = DispatchOutcome(FAIL, payload=payload,
                                          error=f"{type(exc).__name__}: {exc}")
        self._notify(category, ctx, outcome)
        return outcome

    # ------------------------------------------------------------------ bindings

    def bind_params(self, spec: TransformSpec, available: dict[str, Any]) -> list[Any]:
        """Values for exactly the requested names in declared order; names
        missing from ``available`` bind to ABSENT; Lazy values materialize
        only when requested."""
        return self.bind_params_by_name(spec.requested, available)

    @staticmethod
    def bind_params_by_name(requested: list[str], available: dict[str, Any]) -> list[Any]:
        values = []
        for name in requested:
            value = available.get(name, ABSENT)
            if isinstance(value, Lazy):
                value = value.get()
            values.append(value)
        return values

    def _available_bindings(self, category: CategoryId, ctx: InterceptContext,
                            payload: Any, sc: _ShortCircuit) -> dict[str, Any]:
        available: dict[str, Any] = {
            "context": ctx.context,
            "type": ctx.kind,
            "args": ctx.args,
            "id": ctx.session_id,
            "data": ctx.state,
            "name": ctx.context,
            "controls": Lazy(lambda: ControlsHandle(self.controls)),
            "resolve": sc.resolve,
            "reject": sc.reject,
        }
        payload_name = {
            CategoryId.MEDIA: "constraints",
            CategoryId.DEVICES: "devices",
            CategoryId.SESSION: "session",
            CategoryId.CONNECT: "config",
            CategoryId.NETWORK: "candidate",
            CategoryId.SECURITY: "headers",
            CategoryId.CPU: "details",
        }.get(category)
        if payload_name:
            available[payload_name] = payload
        if category is CategoryId.CONNECT:
            available["configuration"] = payload
        available.update(self.extra_bindings)
        available.update(ctx.objects)
        allowed = CATEGORY_BINDINGS[category]
        return {k: v for k, v in available.items() if k in allowed}

    # ------------------------------------------------------------------ sessions

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._state_lock:
            lock = self._session_locks.get(session_id)
            if lock is None:
                lock = threading.Lock()
                self._session_locks[session_id] = lock
            return lock

    def _state_doc(self, session_id: str) -> dict:
        with self._state_lock:
            doc = self._state_docs.get(session_id)
            if doc is None:
                doc = {}
                self._state_docs[session_id] = doc
            return doc

    def reset_session(self, session_id: str) -> None:
        """Drop the persisted state document for a session id (scenario runs
        reuse deterministic ids and must start clean)."""
        with self._state_lock:
            self._state_docs.pop(session_id, None)

    # ------------------------------------------------------------------ misc

    def _dispatch_rng(self, category: CategoryId, ctx: InterceptContext) -> random.Random:
        seed = self.settings.seed if self.settings.seed is not None else 0
        return random.Random(f"{seed}:{category.value}:{ctx.session_id}:{ctx.context}")

    def add_dispatch_listener(self, fn: Callable[[CategoryId, InterceptContext, DispatchOutcome], None]) -> None:
        self._dispatch_listeners.append(fn)

    def remove_dispatch_listener(self, fn) -> None:
        if fn in self._dispatch_listeners:
            self._dispatch_listeners.remove(fn)

    def _notify(self, category: CategoryId, ctx: InterceptContext, outcome: DispatchOutcome) -> None:
        for listener in list(self._dispatch_listeners):
            try:
                listener(category, ctx, outcome)
            except Exception:
                log.exception("dispatch listener failed")

    def update_settings(self, settings: EngineSettings) -> None:
        settings.validate()
        self.settings = settings


@dataclass
class BuiltinCall:
    """Everything a builtin sees for one dispatch."""
    payload: Any
    ctx: InterceptContext
    params: dict[str, Any]
    bindings: dict[str, Any]
    rng: random.Random
    resolve: Callable[..., None]
    reject: Callable[..., None]
