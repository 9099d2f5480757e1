"""Signaling man-in-the-middle: WebSocket frames and HTTP exchanges flow
through Socket/Request dispatch, Security header handling, config header
rules and the fault-injection policy.

The pipeline itself is transport-agnostic: ``on_message`` returns *effects*
(forward at time t, synthesize reply, close) that an adapter executes. The
bundled adapters are an in-memory one (tests, harness signaling) and a live
``websockets`` listener; both run the same pipeline, so transparency and
fault-timing guarantees measured in-memory hold for real sockets too.

Fixed per-message delays never reorder a direction: each direction keeps a
forward-time watermark, so a later message cannot overtake an earlier one
even when random delays are sampled.
"""

from __future__ import annotations

import itertools
import logging
import random
import re
import threading
from collections import deque
from dataclasses import dataclass, field
from fnmatch import fnmatch
from typing import Any, Callable, Optional, Union

from .clock import WallClock
from .engine import (FAIL, MODIFIED, SHORT_CIRCUIT, CategoryId, Engine,
                     InterceptContext)
from .errors import InvalidValue, UnknownSession, UpstreamTimeout

log = logging.getLogger(__name__)

DEFAULT_RECORD_CAPACITY = 10_000

Payload = Union[str, bytes]


# --------------------------------------------------------------------------
# HTTP exchange model
# --------------------------------------------------------------------------

@dataclass
class HttpRequest:
    method: str
    url: str
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""


@dataclass
class HttpResponse:
    status: int
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""


@dataclass
class ExchangeResult:
    """Outcome of one proxied HTTP exchange; ``delay_ms`` is the sampled
    fault delay the serving adapter should apply before responding."""
    response: HttpResponse
    delay_ms: float
    session: "ProxySession"


# --------------------------------------------------------------------------
# Header rules
# --------------------------------------------------------------------------

@dataclass
class HeaderRule:
    direction: str      # request | response
    action: str         # remove | set | append
    header_name: str
    value: Optional[str] = None

    def validate(self) -> None:
        if self.direction not in ("request", "response"):
            raise InvalidValue(f"header rule direction must be request|response, got {self.direction!r}")
        if self.action not in ("remove", "set", "append"):
            raise InvalidValue(f"header rule action must be remove|set|append, got {self.action!r}")
        if self.action == "remove" and self.value is not None:
            raise InvalidValue("remove header rule carries no value")
        if self.action in ("set", "append") and self.value is None:
            raise InvalidValue(f"{self.action} header rule requires a value")

    @classmethod
    def from_doc(cls, doc: dict) -> "HeaderRule":
        rule = cls(doc["direction"], doc["action"], doc["header_name"], doc.get("value"))
        rule.validate()
        return rule

    def to_doc(self) -> dict:
        doc = {"direction": self.direction, "action": self.action,
               "header_name": self.header_name}
        if self.value is not None:
            doc["value"] = self.value
        return doc


def apply_header_rules(headers: list[tuple[str, str]], rules: list[HeaderRule],
                       direction: Optional[str] = None) -> list[tuple[str, str]]:
    """Apply rules in order; name matching is case-insensitive; remove
    deletes every instance of the header."""
    out = list(headers)
    for rule in rules:
        if direction is not None and rule.direction != direction:
            continue
        wanted = rule.header_name.lower()
        if rule.action == "remove":
            out = [(k, v) for k, v in out if k.lower() != wanted]
        elif rule.action == "set":
            out = [(k, v) for k, v in out if k.lower() != wanted]
            out.append((rule.header_name, rule.value or ""))
        elif rule.action == "append":
            out.append((rule.header_name, rule.value or ""))
    return out


# --------------------------------------------------------------------------
# Fault policy
# --------------------------------------------------------------------------

@dataclass
class DelaySpec:
    fixed_ms: Optional[float] = None
    uniform_ms: Optional[tuple[float, float]] = None

    def sample(self, rng: random.Random) -> float:
        if self.fixed_ms is not None:
            return self.fixed_ms
        if self.uniform_ms is not None:
            lo, hi = self.uniform_ms
            return rng.uniform(lo, hi)
        return 0.0

    @classmethod
    def from_doc(cls, doc) -> "DelaySpec":
        if isinstance(doc, (int, float)):
            return cls(fixed_ms=float(doc))
        if "fixed" in doc:
            return cls(fixed_ms=float(doc["fixed"]))
        if "uniform" in doc:
            lo, hi = doc["uniform"]
            return cls(uniform_ms=(float(lo), float(hi)))
        raise InvalidValue(f"delay spec needs 'fixed' or 'uniform', got {doc!r}")


@dataclass
class FakeResponseRule:
    match: str                      # URL glob or message substring
    status: int = 200
    body: str = ""
    probability: float = 1.0

    @classmethod
    def from_doc(cls, doc: dict) -> "FakeResponseRule":
        rule = cls(doc["match"], int(doc.get("status", 200)),
                   doc.get("body", ""), float(doc.get("probability", 1.0)))
        if not 0.0 <= rule.probability <= 1.0:
            raise InvalidValue(f"fake response probability must be in [0,1], got {rule.probability}")
        return rule


@dataclass
class UrlRewrite:
    from_pattern: str
    to_template: str

    def apply(self, url: str) -> str:
        return re.sub(self.from_pattern, self.to_template, url)


@dataclass
class FaultPolicy:
    delay: Optional[DelaySpec] = None
    drop_prob: float = 0.0
    close_after_ms: Optional[float] = None
    fake_response_rules: list[FakeResponseRule] = field(default_factory=list)
    url_rewrite: Optional[UrlRewrite] = None

    def validate(self) -> None:
        if not 0.0 <= self.drop_prob <= 1.0:
            raise InvalidValue(f"drop_prob must be in [0,1], got {self.drop_prob}")
        if self.close_after_ms is not None and self.close_after_ms < 0:
            raise InvalidValue("close_after_ms must be non-negative")

    @classmethod
    def from_doc(cls, doc: dict) -> "FaultPolicy":
        policy = cls(
            delay=DelaySpec.from_doc(doc["delay_ms"]) if "delay_ms" in doc else None,
            drop_prob=float(doc.get("drop_prob", 0.0)),
            close_after_ms=doc.get("close_after_ms"),
            fake_response_rules=[FakeResponseRule.from_doc(r)
                                 for r in doc.get("fake_response_rules", [])],
            url_rewrite=UrlRewrite(**doc["url_rewrite"]) if doc.get("url_rewrite") else None,
        )
        policy.validate()
        return policy


# --------------------------------------------------------------------------
# Sessions, records, effects
# --------------------------------------------------------------------------

@dataclass
class MessageRecord:
    session_id: str
    direction: str            # c2s | s2c
    t_ms: float
    seq: int
    payload: Payload
    size: int
    modified: bool = False
    dropped: bool = False
    note: str = ""
    original: Optional[Payload] = None  # pre-transform payload when modified

    def to_doc(self) -> dict:
        def text(value):
            return value.decode("utf-8", "replace") if isinstance(value, bytes) else value
        doc = {"session_id": self.session_id, "direction": self.direction,
               "t_ms": self.t_ms, "seq": self.seq, "payload": text(self.payload),
               "binary": isinstance(self.payload, bytes), "size": self.size,
               "modified": self.modified, "dropped": self.dropped, "note": self.note}
        if self.original is not None:
            doc["original"] = text(self.original)
        return doc


@dataclass
class ProxySession:
    id: str
    client_endpoint: str
    upstream_url: str
    opened_at_ms: float
    counters: dict = field(default_factory=lambda: {
        "msgs_c2s": 0, "msgs_s2c": 0, "bytes_c2s": 0, "bytes_s2c": 0,
        "modified_count": 0, "forwarded_c2s": 0, "forwarded_s2c": 0,
        "dropped_c2s": 0, "dropped_s2c": 0})
    closed: bool = False
    close_at_ms: Optional[float] = None
    records: deque = field(default_factory=lambda: deque(maxlen=DEFAULT_RECORD_CAPACITY))
    evicted: int = 0
    last_forward_at: dict = field(default_factory=lambda: {"c2s": 0.0, "s2c": 0.0})
    rng: random.Random = field(default_factory=random.Random)
    _seq: Any = None

    def to_doc(self) -> dict:
        return {"id": self.id, "client_endpoint": self.client_endpoint,
                "upstream_url": self.upstream_url, "opened_at_ms": self.opened_at_ms,
                "closed": self.closed, "counters": dict(self.counters),
                "records": len(self.records), "evicted": self.evicted}


@dataclass
class Forward:
    at_ms: float
    direction: str
    payload: Payload


@dataclass
class Reply:
    at_ms: float
    direction: str
    payload: Payload


@dataclass
class Close:
    at_ms: float
    reason: str = ""


Effect = Union[Forward, Reply, Close]


class SignalProxy:
    """Session registry plus the per-message interception pipeline."""

    def __init__(self, engine: Engine, clock=None,
                 fault_policy: Optional[FaultPolicy] = None,
                 header_rules: Optional[list[HeaderRule]] = None,
                 record_capacity: int = DEFAULT_RECORD_CAPACITY):
        self.engine = engine
        self.clock = clock or WallClock()
        self.fault_policy = fault_policy or FaultPolicy()
        self.header_rules = list(header_rules or [])
        self.record_capacity = record_capacity
        self._lock = threading.Lock()
        self._sessions: dict[str, ProxySession] = {}
        self._ws_counter = itertools.count(1)
        self._http_counter = itertools.count(1)

    # -- session lifecycle ----------------------------------------------------

    def open_ws_session(self, client_endpoint: str, upstream_url: str,
                        session_id: Optional[str] = None) -> tuple[ProxySession, list[Effect]]:
        now = self.clock.now_ms()
        if self.fault_policy.url_rewrite:
            upstream_url = self.fault_policy.url_rewrite.apply(upstream_url)
        sid = session_id or f"ws-{next(self._ws_counter)}"
        ctx = InterceptContext(context="open", kind="method", session_id=sid)
        outcome = self.engine.dispatch(CategoryId.SOCKET, ctx, upstream_url)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, str):
            upstream_url = outcome.payload

        session = ProxySession(id=sid, client_endpoint=client_endpoint,
                               upstream_url=upstream_url, opened_at_ms=now,
                               records=deque(maxlen=self.record_capacity),
                               rng=self._session_rng(sid))
        session._seq = itertools.count(1)
        session.last_forward_at = {"c2s": now, "s2c": now}
        with self._lock:
            self._sessions[sid] = session

        effects: list[Effect] = []
        if self.fault_policy.close_after_ms is not None:
            session.close_at_ms = now + self.fault_policy.close_after_ms
            effects.append(Close(session.close_at_ms, reason="fault policy close_after_ms"))
        return session, effects

    def close_session(self, session: ProxySession, reason: str = "") -> None:
        session.closed = True

    def get_session(self, session_id: str) -> ProxySession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    def sessions(self) -> list[ProxySession]:
        with self._lock:
            return sorted(self._sessions.values(), key=lambda s: s.id)

    # -- WebSocket message pipeline -------------------------------------------

    def on_message(self, session: ProxySession, direction: str,
                   payload: Payload) -> list[Effect]:
        """Run one frame through dispatch and the fault policy; returns the
        effects the transport adapter must execute."""
        assert direction in ("c2s", "s2c")
        now = self.clock.now_ms()
        size = len(payload)
        session.counters[f"msgs_{direction}"] += 1
        session.counters[f"bytes_{direction}"] += size

        ctx = InterceptContext(context="send" if direction == "c2s" else "message",
                               kind="method" if direction == "c2s" else "event",
                               session_id=session.id)
        outcome = self.engine.dispatch(CategoryId.SOCKET, ctx, payload)

        if outcome.kind == SHORT_CIRCUIT:
            # consumed: upstream never sees it; optional local reply goes back
            session.counters["modified_count"] += 1
            session.counters[f"dropped_{direction}"] += 1
            self._record(session, direction, now, payload, modified=True,
                         dropped=True, note="consumed")
            effects: list[Effect] = []
            if outcome.result is not None:
                reply_dir = "s2c" if direction == "c2s" else "c2s"
                reply_at = self._schedule(session, reply_dir, now)
                self._record(session, reply_dir, now, outcome.result,
                             modified=True, note="synthesized reply")
                session.counters[f"forwarded_{reply_dir}"] += 1
                effects.append(Reply(reply_at, reply_dir, outcome.result))
            return effects

        forwarded = outcome.payload if outcome.kind != FAIL else payload
        modified = outcome.kind == MODIFIED and forwarded != payload
        if modified:
            session.counters["modified_count"] += 1

        if self.fault_policy.drop_prob > 0 and \
                session.rng.random() < self.fault_policy.drop_prob:
            session.counters[f"dropped_{direction}"] += 1
            self._record(session, direction, now, forwarded, modified=modified,
                         dropped=True, note="dropped by fault policy")
            return []

        forward_at = self._schedule(session, direction, now)
        session.counters[f"forwarded_{direction}"] += 1
        delay_note = f"delayed {forward_at - now:.1f} ms" if forward_at > now else ""
        self._record(session, direction, now, forwarded, modified=modified,
                     note=delay_note, original=payload if modified else None)
        return [Forward(forward_at, direction, forwarded)]

    def _schedule(self, session: ProxySession, direction: str, now: float) -> float:
        delay = self.fault_policy.delay.sample(session.rng) if self.fault_policy.delay else 0.0
        at = max(now + delay, session.last_forward_at[direction])  # FIFO per direction
        session.last_forward_at[direction] = at
        return at

    # -- HTTP exchange pipeline ------------------------------------------------

    def proxy_http_exchange(self, request: HttpRequest,
                            upstream_fn: Callable[[HttpRequest], HttpResponse],
                            session_id: Optional[str] = None) -> "ExchangeResult":
        """Full request/response interception. The request and response
        dispatches share one state document (same session id) so transforms
        can correlate the two sides of an exchange."""
        now = self.clock.now_ms()
        sid = session_id or f"http-{next(self._http_counter)}"
        session = ProxySession(id=sid, client_endpoint="http-client",
                               upstream_url=request.url, opened_at_ms=now,
                               records=deque(maxlen=self.record_capacity),
                               rng=self._session_rng(sid))
        session._seq = itertools.count(1)
        with self._lock:
            self._sessions[sid] = session

        if self.fault_policy.url_rewrite:
            request.url = self.fault_policy.url_rewrite.apply(request.url)

        req_ctx = InterceptContext(context="request", kind="method", session_id=sid)
        outcome = self.engine.dispatch(CategoryId.REQUEST, req_ctx, request)

        response: Optional[HttpResponse] = None
        note = ""
        if outcome.kind == SHORT_CIRCUIT and isinstance(outcome.result, HttpResponse):
            response = outcome.result
            note = "short-circuited by transform"
        else:
            request = outcome.payload if isinstance(outcome.payload, HttpRequest) else request
            request.headers = self._security_headers("request_headers", sid, request.headers)
            request.headers = apply_header_rules(request.headers, self.header_rules, "request")

            fake = self._match_fake_response(session, request.url)
            if fake is not None:
                response = fake
                note = "fake response rule"
            elif self.fault_policy.drop_prob > 0 and \
                    session.rng.random() < self.fault_policy.drop_prob:
                response = HttpResponse(504, [("content-type", "text/plain")],
                                        b"upstream timeout (dropped by fault policy)")
                note = "dropped by fault policy"

        self._record(session, "c2s", now, f"{request.method} {request.url}".encode(),
                     modified=outcome.kind == MODIFIED, dropped=note != "")

        delay_ms = self.fault_policy.delay.sample(session.rng) if self.fault_policy.delay else 0.0

        if response is None:
            try:
                response = upstream_fn(request)
            except UpstreamTimeout:
                response = HttpResponse(504, [("content-type", "text/plain")],
                                        b"upstream timeout")
                note = "upstream timeout"

        resp_ctx = InterceptContext(context="response", kind="event", session_id=sid)
        resp_outcome = self.engine.dispatch(CategoryId.REQUEST, resp_ctx, response)
        if resp_outcome.kind == MODIFIED and isinstance(resp_outcome.payload, HttpResponse):
            response = resp_outcome.payload
        response.headers = self._security_headers("response_headers", sid, response.headers)
        response.headers = apply_header_rules(response.headers, self.header_rules, "response")

        self._record(session, "s2c", self.clock.now_ms(),
                     f"{response.status}".encode(),
                     modified=resp_outcome.kind == MODIFIED, note=note)
        session.closed = True
        return ExchangeResult(response=response, delay_ms=delay_ms, session=session)

    def _match_fake_response(self, session: ProxySession, url: str) -> Optional[HttpResponse]:
        for rule in self.fault_policy.fake_response_rules:
            if fnmatch(url, rule.match) and session.rng.random() < rule.probability:
                return HttpResponse(rule.status, [("content-type", "text/plain")],
                                    rule.body.encode())
        return None

    def _security_headers(self, context: str, sid: str,
                          headers: list[tuple[str, str]]) -> list[tuple[str, str]]:
        ctx = InterceptContext(context=context, kind="method", session_id=sid)
        outcome = self.engine.dispatch(CategoryId.SECURITY, ctx, headers)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, list):
            return outcome.payload
        return headers

    # -- records ---------------------------------------------------------------

    def _record(self, session: ProxySession, direction: str, t_ms: float,
                payload: Payload, modified: bool = False, dropped: bool = False,
                note: str = "", original: Optional[Payload] = None) -> None:
        if len(session.records) == session.records.maxlen:
            session.evicted += 1
        session.records.append(MessageRecord(
            session_id=session.id, direction=direction, t_ms=t_ms,
            seq=next(session._seq), payload=payload, size=len(payload),
            modified=modified, dropped=dropped, note=note,
            original=original if modified else None))

    def export_sequence(self, session_id: str, t_from: Optional[float] = None,
                        t_to: Optional[float] = None) -> tuple[list[MessageRecord], int]:
        """Time-ordered records for the sequence view, plus the count of
        records evicted by the ring buffer."""
        session = self.get_session(session_id)
        records = [r for r in session.records
                   if (t_from is None or r.t_ms >= t_from)
                   and (t_to is None or r.t_ms <= t_to)]
        return records, session.evicted

    def _session_rng(self, session_id: str) -> random.Random:
        seed = self.engine.settings.seed if self.engine.settings.seed is not None else 0
        return random.Random(f"{seed}:proxy:{session_id}")
