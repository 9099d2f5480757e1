"""Builtin transform catalog.

Each entry carries a parameter schema, a strict-safe flag and the function
itself. Users pick an entry per category and steer it through parameters and
controls; host code may register additional entries (plugins), which default
to non-strict-safe since their provenance is outside the shipped set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fnmatch import fnmatch
from typing import Any, Callable, Optional

from . import mediaconf, sdp
from .engine import ABSENT, BuiltinCall, CategoryId, TransformSpec
from .errors import InvalidParams, UnknownBuiltin
from .ice import CandidatePolicy, filter_candidates

log = logging.getLogger(__name__)


@dataclass
class ParamSpec:
    name: str
    type: str  # string | number | boolean | enum
    default: Any = None
    required: bool = False
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    choices: Optional[list[str]] = None
    description: str = ""

    def to_doc(self) -> dict:
        doc = {"name": self.name, "type": self.type, "default": self.default,
               "required": self.required}
        if self.minimum is not None:
            doc["minimum"] = self.minimum
        if self.maximum is not None:
            doc["maximum"] = self.maximum
        if self.choices is not None:
            doc["choices"] = self.choices
        if self.description:
            doc["description"] = self.description
        return doc

    def check(self, value: Any) -> None:
        if self.type == "boolean":
            if not isinstance(value, bool):
                raise InvalidParams(f"param {self.name!r} must be boolean, got {value!r}")
        elif self.type == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InvalidParams(f"param {self.name!r} must be a number, got {value!r}")
            if self.minimum is not None and value < self.minimum:
                raise InvalidParams(f"param {self.name!r} must be >= {self.minimum}, got {value}")
            if self.maximum is not None and value > self.maximum:
                raise InvalidParams(f"param {self.name!r} must be <= {self.maximum}, got {value}")
        elif self.type == "string":
            if not isinstance(value, str):
                raise InvalidParams(f"param {self.name!r} must be a string, got {value!r}")
        elif self.type == "enum":
            if value not in (self.choices or []):
                raise InvalidParams(f"param {self.name!r} must be one of {self.choices}, got {value!r}")
        else:  # pragma: no cover - schema bug
            raise InvalidParams(f"param {self.name!r} has unknown type {self.type!r}")


@dataclass
class CatalogEntry:
    category: CategoryId
    name: str
    fn: Callable[[BuiltinCall], Any]
    description: str
    params: list[ParamSpec] = field(default_factory=list)
    strict_safe: bool = True
    requires: tuple[str, ...] = ()

    def effective_requested(self, spec: TransformSpec) -> list[str]:
        requested = list(self.requires)
        for name in spec.requested:
            if name not in requested:
                requested.append(name)
        return requested

    def params_with_defaults(self, params: dict[str, Any]) -> dict[str, Any]:
        merged = {p.name: p.default for p in self.params}
        merged.update(params)
        return merged

    def to_doc(self) -> dict:
        return {"category": self.category.value, "name": self.name,
                "description": self.description,
                "params": [p.to_doc() for p in self.params],
                "strict_safe": self.strict_safe,
                "requires": list(self.requires)}


class Catalog:
    def __init__(self):
        self._entries: dict[tuple[CategoryId, str], CatalogEntry] = {}

    def register(self, entry: CatalogEntry) -> None:
        self._entries[(entry.category, entry.name)] = entry

    def register_plugin(self, entry: CatalogEntry) -> None:
        """Host-plugin hook; plugins are never strict-safe."""
        entry.strict_safe = False
        self.register(entry)

    def get(self, category: CategoryId, name: str) -> CatalogEntry:
        entry = self._entries.get((category, name))
        if entry is None:
            raise UnknownBuiltin(f"no builtin {name!r} in category {category.value}")
        return entry

    def entries(self, category: Optional[CategoryId] = None) -> list[CatalogEntry]:
        out = [e for e in self._entries.values()
               if category is None or e.category == category]
        return sorted(out, key=lambda e: (e.category.value, e.name))

    def strict_safe_names(self, category: CategoryId) -> set[str]:
        return {e.name for e in self.entries(category) if e.strict_safe}

    def manifest(self, category: Optional[CategoryId] = None) -> list[dict]:
        return [e.to_doc() for e in self.entries(category)]

    def validate_params(self, entry: CatalogEntry, params: dict[str, Any]) -> None:
        known = {p.name: p for p in entry.params}
        for name in params:
            if name not in known:
                raise InvalidParams(f"unknown param {name!r} for builtin {entry.name!r}")
        for spec in entry.params:
            if spec.name in params:
                spec.check(params[spec.name])
            elif spec.required:
                raise InvalidParams(f"builtin {entry.name!r} requires param {spec.name!r}")


# --------------------------------------------------------------------------
# Builtin implementations
# --------------------------------------------------------------------------

_KIND = ParamSpec("kind", "enum", choices=["audio", "video"], required=True)
_INTERVAL = ParamSpec("interval_ms", "number", minimum=100,
                      description="overrides the engine stats poll interval")


def _session_prefer_codec(call: BuiltinCall):
    return sdp.prefer_codec(call.payload, call.params["kind"], call.params["codec"])


def _session_media_policy(call: BuiltinCall):
    return sdp.set_media_policy(call.payload, call.params["kind"], call.params["policy"])


def _session_bandwidth(call: BuiltinCall):
    return sdp.set_receiver_bandwidth(call.payload, call.params["kind"],
                                      int(call.params["kbps"]))


def _session_fmtp(call: BuiltinCall):
    return sdp.set_fmtp_param(call.payload, call.params["codec"],
                              call.params["key"], call.params["value"])


def _session_feedback(call: BuiltinCall):
    return sdp.modify_feedback(call.payload, call.params["action"])


def _session_log(call: BuiltinCall):
    log.info("session %s %s:\n%s", call.ctx.session_id, call.ctx.context,
             sdp.serialize_sdp(call.payload))
    return None


def _network_filter(call: BuiltinCall):
    return filter_candidates(call.payload, CandidatePolicy.from_params(call.params))


def _network_log(call: BuiltinCall):
    for cand in call.payload:
        log.info("candidate %s %s: %s", call.ctx.session_id, call.ctx.context, cand)
    return None


def _connect_enterprise(call: BuiltinCall):
    rules = [{"rule": "strip_servers"},
             {"rule": "inject_server", "url": call.params["url"],
              "username": call.params.get("username"),
              "credential": call.params.get("credential")},
             {"rule": "relay_only"}]
    return mediaconf.transform_peer_config(call.payload, rules)


def _connect_force_relay(call: BuiltinCall):
    return mediaconf.transform_peer_config(call.payload, [{"rule": "relay_only"}])


def _media_cap_framerate(call: BuiltinCall):
    return mediaconf.cap_framerate(call.payload, call.params["max_fps"])


def _media_cap_resolution(call: BuiltinCall):
    return mediaconf.cap_resolution(call.payload, call.params["max_height"])


def _media_drop_audio(call: BuiltinCall):
    return mediaconf.drop_audio(call.payload)


def _media_drop_video(call: BuiltinCall):
    return mediaconf.drop_video(call.payload)


def _media_force_device(call: BuiltinCall):
    return mediaconf.force_device(call.payload, call.params["kind"],
                                  call.params["device_id"])


def _media_adaptive(call: BuiltinCall):
    controls = call.bindings.get("controls")
    if controls is ABSENT or controls is None:
        return None
    if controls.get(call.params["control"]):
        return mediaconf.cap_framerate(call.payload, call.params["max_fps"])
    return None


def _devices_hide_kind(call: BuiltinCall):
    return mediaconf.transform_devices(
        call.payload, [{"rule": "hide_kind", "kind": call.params["kind"]}])


def _devices_hide_label(call: BuiltinCall):
    return mediaconf.transform_devices(
        call.payload, [{"rule": "hide_label_pattern", "pattern": call.params["pattern"]}])


def _devices_randomize(call: BuiltinCall):
    return mediaconf.transform_devices(
        call.payload, [{"rule": "randomize_labels"}], rng=call.rng)


def _devices_default_only(call: BuiltinCall):
    return mediaconf.transform_devices(call.payload, [{"rule": "expose_default_only"}])


def _devices_add_dummy(call: BuiltinCall):
    return mediaconf.transform_devices(
        call.payload,
        [{"rule": "add_dummy", "kind": call.params["kind"], "label": call.params["label"]}])


def _stats_log(call: BuiltinCall):
    log.info("stats %s at %s: %d entries", call.payload.session_id,
             call.payload.taken_at_ms, len(call.payload.entries))
    return None


def _stats_save(call: BuiltinCall):
    send = call.bindings.get("send")
    if send is ABSENT or send is None:
        raise InvalidParams("save_stats needs the 'send' helper binding (no sink wired)")
    sink = call.params.get("sink") or None
    send(call.payload.session_id, sink)
    return None


def _stats_quality_gap(call: BuiltinCall):
    from .stats import actual_video_params, detect_quality_gap
    actual = actual_video_params(call.payload)
    if actual is None:
        return None
    desired = {"height": call.params["desired_height"], "frame_rate": call.params["desired_fps"]}
    report = detect_quality_gap(desired, actual)
    controls = call.bindings.get("controls")
    if controls is not ABSENT and controls is not None:
        controls.set("stats.degraded", report["degraded"])
    return None


def _data_disable(call: BuiltinCall):
    call.resolve(None)  # veto channel creation / suppress the message


def _data_uppercase(call: BuiltinCall):
    if call.ctx.context != "send":
        return None
    if isinstance(call.payload, str):
        return call.payload.upper()
    if isinstance(call.payload, bytes):
        return call.payload.upper()
    return None


def _data_log(call: BuiltinCall):
    log.info("data %s %s: %r", call.ctx.session_id, call.ctx.context, call.payload)
    return None


def _socket_rewrite_url(call: BuiltinCall):
    if call.ctx.context != "open" or not isinstance(call.payload, str):
        return None
    match = call.params["match"]
    if match in call.payload:
        return call.payload.replace(match, call.params["replacement"])
    return None


def _socket_consume_reply(call: BuiltinCall):
    if call.ctx.context == "send" and isinstance(call.payload, str) \
            and call.params["match"] in call.payload:
        call.resolve(call.params["reply"])


def _socket_log(call: BuiltinCall):
    log.info("socket %s %s: %r", call.ctx.session_id, call.ctx.context, call.payload)
    return None


def _request_fake_response(call: BuiltinCall):
    if call.ctx.context != "request":
        return None
    from .proxy import HttpResponse
    if fnmatch(call.payload.url, call.params["match"]):
        body = str(call.params.get("body") or "")
        call.resolve(HttpResponse(status=int(call.params["status"]),
                                  headers=[("content-type", "text/plain")],
                                  body=body.encode()))


def _request_block(call: BuiltinCall):
    if call.ctx.context != "request":
        return None
    from .proxy import HttpResponse
    if fnmatch(call.payload.url, call.params["match"]):
        call.resolve(HttpResponse(status=403, headers=[], body=b"blocked"))


def _request_correlate(call: BuiltinCall):
    header = call.params["header"]
    if call.ctx.context == "request":
        cid = call.ctx.state.get("correlation_id")
        if cid is None:
            cid = "".join(call.rng.choice("0123456789abcdef") for _ in range(16))
            call.ctx.state["correlation_id"] = cid
        call.payload.headers.append((header, cid))
        return call.payload
    if call.ctx.context == "response":
        cid = call.ctx.state.get("correlation_id")
        if cid is not None:
            call.payload.headers.append((header, cid))
        return call.payload
    return None


def _request_log(call: BuiltinCall):
    log.info("request %s %s", call.ctx.session_id, call.ctx.context)
    return None


def _security_remove_header(call: BuiltinCall):
    wanted = call.params["name"].lower()
    return [(k, v) for k, v in call.payload if k.lower() != wanted]


def _security_set_header(call: BuiltinCall):
    wanted = call.params["name"].lower()
    headers = [(k, v) for k, v in call.payload if k.lower() != wanted]
    headers.append((call.params["name"], call.params["value"]))
    return headers


def _cpu_threshold(call: BuiltinCall):
    controls = call.bindings.get("controls")
    if controls is ABSENT or controls is None:
        return None
    overloaded = call.payload.total_load_percent >= call.params["threshold"]
    controls.set(call.params["control"], overloaded)
    return None


def _cpu_log(call: BuiltinCall):
    log.info("cpu load %.1f%%", call.payload.total_load_percent)
    return None


def default_catalog() -> Catalog:
    cat = Catalog()
    E, P = CatalogEntry, ParamSpec

    # Session ---------------------------------------------------------------
    cat.register(E(CategoryId.SESSION, "prefer_codec", _session_prefer_codec,
                   "Move a codec to the front of the payload preference order "
                   "(G.711 matches PCMU then PCMA).",
                   [_KIND, P("codec", "string", required=True)]))
    cat.register(E(CategoryId.SESSION, "set_media_policy", _session_media_policy,
                   "Disable a media section (port 0) or force its direction.",
                   [_KIND, P("policy", "enum", required=True,
                             choices=["disable", "sendrecv", "sendonly", "recvonly", "inactive"])]))
    cat.register(E(CategoryId.SESSION, "set_receiver_bandwidth", _session_bandwidth,
                   "Cap receive bandwidth with a b=AS attribute.",
                   [_KIND, P("kbps", "number", required=True, minimum=1)]))
    cat.register(E(CategoryId.SESSION, "set_fmtp", _session_fmtp,
                   "Set one fmtp parameter on every payload of a codec "
                   "(e.g. opus stereo=0, H264 packetization-mode).",
                   [P("codec", "string", required=True),
                    P("key", "string", required=True),
                    P("value", "string", required=True)]))
    cat.register(E(CategoryId.SESSION, "modify_feedback", _session_feedback,
                   "Remove NACK feedback, drop FEC payloads, or check FEC presence.",
                   [P("action", "enum", required=True,
                      choices=["remove_nack", "remove_fec", "require_fec"])]))
    cat.register(E(CategoryId.SESSION, "log_session", _session_log,
                   "Log the full session description during negotiation."))

    # Network ---------------------------------------------------------------
    cat.register(E(CategoryId.NETWORK, "filter_candidates", _network_filter,
                   "Drop signaled candidates by type or address class. Filtering "
                   "changes only what is signaled, not the local candidate list.",
                   [P("drop_ipv6", "boolean", default=False),
                    P("drop_private", "boolean", default=False),
                    P("relay_only", "boolean", default=False),
                    P("drop_host", "boolean", default=False)]))
    cat.register(E(CategoryId.NETWORK, "log_candidates", _network_log,
                   "Log every candidate passing the Network intercept."))

    # Connect ---------------------------------------------------------------
    cat.register(E(CategoryId.CONNECT, "enterprise_relay", _connect_enterprise,
                   "Replace all ICE servers with one approved relay and force "
                   "relay-only transport.",
                   [P("url", "string", required=True),
                    P("username", "string"), P("credential", "string")]))
    cat.register(E(CategoryId.CONNECT, "force_relay", _connect_force_relay,
                   "Force iceTransportPolicy=relay, keeping the server list."))

    # Media -----------------------------------------------------------------
    cat.register(E(CategoryId.MEDIA, "cap_framerate", _media_cap_framerate,
                   "Tighten the video frame-rate bound (never loosens).",
                   [P("max_fps", "number", required=True, minimum=1)]))
    cat.register(E(CategoryId.MEDIA, "cap_resolution", _media_cap_resolution,
                   "Tighten the video height bound (never loosens).",
                   [P("max_height", "number", required=True, minimum=1)]))
    cat.register(E(CategoryId.MEDIA, "drop_audio", _media_drop_audio,
                   "Remove audio capture from the constraints."))
    cat.register(E(CategoryId.MEDIA, "drop_video", _media_drop_video,
                   "Remove video capture from the constraints."))
    cat.register(E(CategoryId.MEDIA, "force_device", _media_force_device,
                   "Pin capture to one device id, overriding the app's choice.",
                   [_KIND, P("device_id", "string", required=True)]))
    cat.register(E(CategoryId.MEDIA, "adaptive_framerate", _media_adaptive,
                   "Cap the frame rate while an overload control is set "
                   "(pairs with the Cpu overload_threshold builtin).",
                   [P("control", "string", default="cpu.overload"),
                    P("max_fps", "number", default=10, minimum=1)],
                   requires=("controls",)))

    # Devices ---------------------------------------------------------------
    cat.register(E(CategoryId.DEVICES, "hide_kind", _devices_hide_kind,
                   "Hide every device of one kind.",
                   [P("kind", "enum", required=True,
                      choices=["audioinput", "videoinput", "audiooutput"])]))
    cat.register(E(CategoryId.DEVICES, "hide_label_pattern", _devices_hide_label,
                   "Hide devices whose label matches a glob pattern.",
                   [P("pattern", "string", required=True)]))
    cat.register(E(CategoryId.DEVICES, "randomize_labels", _devices_randomize,
                   "Replace device labels with seeded pseudonyms "
                   "(anti-fingerprinting); ids, kinds and order are preserved."))
    cat.register(E(CategoryId.DEVICES, "expose_default_only", _devices_default_only,
                   "Expose only the first device of each kind."))
    cat.register(E(CategoryId.DEVICES, "add_dummy", _devices_add_dummy,
                   "Append one synthetic device.",
                   [P("kind", "enum", required=True,
                      choices=["audioinput", "videoinput", "audiooutput"]),
                    P("label", "string", default="Dummy device")]))

    # Stats -----------------------------------------------------------------
    cat.register(E(CategoryId.STATS, "log_stats", _stats_log,
                   "Log every polled stats report.", [_INTERVAL]))
    cat.register(E(CategoryId.STATS, "save_stats", _stats_save,
                   "Compress and forward the session's metric series to the "
                   "monitoring sink.",
                   [P("sink", "string"), _INTERVAL],
                   strict_safe=False, requires=("send",)))
    cat.register(E(CategoryId.STATS, "quality_gap", _stats_quality_gap,
                   "Flag the stats.degraded control when actual video quality "
                   "falls below half the desired resolution or frame rate.",
                   [P("desired_height", "number", required=True, minimum=1),
                    P("desired_fps", "number", required=True, minimum=1), _INTERVAL],
                   requires=("controls",)))

    # Data ------------------------------------------------------------------
    cat.register(E(CategoryId.DATA, "disable_data", _data_disable,
                   "Veto data channel creation and suppress all messages."))
    cat.register(E(CategoryId.DATA, "uppercase_messages", _data_uppercase,
                   "Uppercase outgoing data channel messages (demo transform)."))
    cat.register(E(CategoryId.DATA, "log_messages", _data_log,
                   "Log data channel traffic."))

    # Socket ----------------------------------------------------------------
    cat.register(E(CategoryId.SOCKET, "rewrite_url", _socket_rewrite_url,
                   "Rewrite the upstream URL at session open.",
                   [P("match", "string", required=True),
                    P("replacement", "string", required=True)]))
    cat.register(E(CategoryId.SOCKET, "consume_and_reply", _socket_consume_reply,
                   "Consume matching client messages and answer locally; the "
                   "upstream never sees them.",
                   [P("match", "string", required=True),
                    P("reply", "string", required=True)]))
    cat.register(E(CategoryId.SOCKET, "log_messages", _socket_log,
                   "Log signaling messages in both directions."))

    # Request ---------------------------------------------------------------
    cat.register(E(CategoryId.REQUEST, "fake_response", _request_fake_response,
                   "Answer matching requests locally with predefined content.",
                   [P("match", "string", required=True),
                    P("status", "number", default=200, minimum=100, maximum=599),
                    P("body", "string", default="")]))
    cat.register(E(CategoryId.REQUEST, "block_requests", _request_block,
                   "Refuse matching requests with 403.",
                   [P("match", "string", required=True)]))
    cat.register(E(CategoryId.REQUEST, "correlate", _request_correlate,
                   "Stamp request and response of one exchange with the same "
                   "correlation id via the shared state document.",
                   [P("header", "string", default="x-correlation-id")]))
    cat.register(E(CategoryId.REQUEST, "log_requests", _request_log,
                   "Log request/response pairs."))

    # Security --------------------------------------------------------------
    cat.register(E(CategoryId.SECURITY, "remove_header", _security_remove_header,
                   "Delete a header (e.g. content-security-policy) from proxied "
                   "exchanges; matching is case-insensitive.",
                   [P("name", "string", required=True)]))
    cat.register(E(CategoryId.SECURITY, "set_header", _security_set_header,
                   "Set a header to a fixed value on proxied exchanges.",
                   [P("name", "string", required=True),
                    P("value", "string", required=True)]))

    # Cpu ---------------------------------------------------------------------
    cat.register(E(CategoryId.CPU, "overload_threshold", _cpu_threshold,
                   "Publish a boolean overload control from the sampled load.",
                   [P("threshold", "number", default=75, minimum=0, maximum=100),
                    P("control", "string", default="cpu.overload")],
                   requires=("controls",)))
    cat.register(E(CategoryId.CPU, "log_cpu", _cpu_log, "Log CPU samples."))

    return cat
