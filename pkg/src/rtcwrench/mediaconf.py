"""Rewrites for the non-SDP configuration payloads: capture constraints,
device lists, peer configuration, and sender encoding limits.

All cap-style rules tighten and never loosen: the use case is protecting the
endpoint from an app asking for more than the user wants to give, so an
existing stricter bound always wins.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fnmatch import fnmatch
from typing import Optional, Union

from .errors import InvalidServerUrl, InvalidValue

DEVICE_KINDS = ("audioinput", "videoinput", "audiooutput")


# --------------------------------------------------------------------------
# Capture constraints
# --------------------------------------------------------------------------

@dataclass
class Bound:
    ideal: Optional[float] = None
    max: Optional[float] = None

    def to_doc(self) -> dict:
        doc = {}
        if self.ideal is not None:
            doc["ideal"] = self.ideal
        if self.max is not None:
            doc["max"] = self.max
        return doc

    @classmethod
    def from_doc(cls, doc) -> "Bound":
        if isinstance(doc, (int, float)) and not isinstance(doc, bool):
            return cls(ideal=float(doc))
        return cls(ideal=doc.get("ideal"), max=doc.get("max"))

    def tightened(self, cap: float) -> "Bound":
        new_max = cap if self.max is None else min(self.max, cap)
        new_ideal = self.ideal
        if new_ideal is not None and new_ideal > new_max:
            new_ideal = new_max
        return Bound(ideal=new_ideal, max=new_max)


@dataclass
class TrackConstraints:
    width: Optional[Bound] = None
    height: Optional[Bound] = None
    frame_rate: Optional[Bound] = None
    device_id: Optional[str] = None
    facing_mode: Optional[str] = None

    def to_doc(self) -> dict:
        doc = {}
        for name in ("width", "height", "frame_rate"):
            bound = getattr(self, name)
            if bound is not None:
                doc[name] = bound.to_doc()
        if self.device_id is not None:
            doc["device_id"] = self.device_id
        if self.facing_mode is not None:
            doc["facing_mode"] = self.facing_mode
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "TrackConstraints":
        return cls(
            width=Bound.from_doc(doc["width"]) if "width" in doc else None,
            height=Bound.from_doc(doc["height"]) if "height" in doc else None,
            frame_rate=Bound.from_doc(doc["frame_rate"]) if "frame_rate" in doc else None,
            device_id=doc.get("device_id"),
            facing_mode=doc.get("facing_mode"),
        )


TrackSpec = Union[bool, TrackConstraints]


@dataclass
class MediaConstraints:
    audio: TrackSpec = True
    video: TrackSpec = True

    def to_doc(self) -> dict:
        def side(spec: TrackSpec):
            return spec if isinstance(spec, bool) else spec.to_doc()
        return {"audio": side(self.audio), "video": side(self.video)}

    @classmethod
    def from_doc(cls, doc: dict) -> "MediaConstraints":
        def side(value) -> TrackSpec:
            if isinstance(value, bool):
                return value
            return TrackConstraints.from_doc(value)
        return cls(audio=side(doc.get("audio", True)), video=side(doc.get("video", True)))

    def validate(self) -> None:
        for name in ("audio", "video"):
            spec = getattr(self, name)
            if isinstance(spec, bool):
                continue
            for bname in ("width", "height", "frame_rate"):
                bound = getattr(spec, bname)
                if bound is None:
                    continue
                for v in (bound.ideal, bound.max):
                    if v is not None and v <= 0:
                        raise InvalidValue(f"{name}.{bname} must be positive, got {v}")
                if bound.ideal is not None and bound.max is not None and bound.max < bound.ideal:
                    raise InvalidValue(f"{name}.{bname}: max {bound.max} < ideal {bound.ideal}")


def _as_track(spec: TrackSpec) -> TrackConstraints:
    return TrackConstraints() if spec is True else spec


def _cap_bound(c: MediaConstraints, member: str, bound_name: str, cap: float) -> MediaConstraints:
    spec = getattr(c, member)
    if spec is False:
        return c
    track = _as_track(spec)
    bound = getattr(track, bound_name) or Bound()
    track = replace(track, **{bound_name: bound.tightened(cap)})
    return replace(c, **{member: track})


def cap_framerate(c: MediaConstraints, max_fps: float) -> MediaConstraints:
    return _cap_bound(c, "video", "frame_rate", max_fps)


def cap_resolution(c: MediaConstraints, max_height: float) -> MediaConstraints:
    return _cap_bound(c, "video", "height", max_height)


def drop_audio(c: MediaConstraints) -> MediaConstraints:
    return replace(c, audio=False)


def drop_video(c: MediaConstraints) -> MediaConstraints:
    return replace(c, video=False)


def force_device(c: MediaConstraints, kind: str, device_id: str) -> MediaConstraints:
    member = "audio" if kind == "audio" else "video"
    spec = getattr(c, member)
    if spec is False:
        return c
    track = replace(_as_track(spec), device_id=device_id)
    return replace(c, **{member: track})


def force_facing(c: MediaConstraints, facing_mode: str) -> MediaConstraints:
    spec = c.video
    if spec is False:
        return c
    return replace(c, video=replace(_as_track(spec), facing_mode=facing_mode))


_CONSTRAINT_RULES = {
    "cap_framerate": lambda c, r: cap_framerate(c, r["max_fps"]),
    "cap_resolution": lambda c, r: cap_resolution(c, r["max_height"]),
    "drop_audio": lambda c, r: drop_audio(c),
    "drop_video": lambda c, r: drop_video(c),
    "force_device": lambda c, r: force_device(c, r["kind"], r["device_id"]),
    "force_facing": lambda c, r: force_facing(c, r["facing_mode"]),
}


def transform_constraints(c: MediaConstraints, rules: list[dict]) -> MediaConstraints:
    """Apply rules in order; each rule is ``{"rule": name, ...args}``."""
    for rule in rules:
        name = rule.get("rule")
        if name not in _CONSTRAINT_RULES:
            raise InvalidValue(f"unknown constraint rule {name!r}")
        c = _CONSTRAINT_RULES[name](c, rule)
    return c


# --------------------------------------------------------------------------
# Device lists
# --------------------------------------------------------------------------

@dataclass
class DeviceInfo:
    device_id: str
    kind: str
    label: str
    group_id: str = ""

    def to_doc(self) -> dict:
        return {"device_id": self.device_id, "kind": self.kind,
                "label": self.label, "group_id": self.group_id}

    @classmethod
    def from_doc(cls, doc: dict) -> "DeviceInfo":
        return cls(doc["device_id"], doc["kind"], doc.get("label", ""),
                   doc.get("group_id", ""))


def _pseudonym(rng: random.Random, taken: set[str]) -> str:
    while True:
        name = "device-" + "".join(rng.choice("0123456789abcdef") for _ in range(8))
        if name not in taken:
            return name


def transform_devices(devices: list[DeviceInfo], rules: list[dict],
                      rng: Optional[random.Random] = None) -> list[DeviceInfo]:
    """Apply device-list rules in order.

    ``randomize_labels`` keeps count, order, ids and kinds, replacing only the
    labels with pseudonyms drawn from ``rng`` (the engine seed in practice).
    ``add_dummy`` is the only rule allowed to invent a device id.
    """
    rng = rng or random.Random(0)
    out = list(devices)
    for rule in rules:
        name = rule.get("rule")
        if name == "hide_kind":
            out = [d for d in out if d.kind != rule["kind"]]
        elif name == "hide_label_pattern":
            out = [d for d in out if not fnmatch(d.label, rule["pattern"])]
        elif name == "randomize_labels":
            taken = {d.label for d in out}
            out = [replace(d, label=_pseudonym(rng, taken)) for d in out]
        elif name == "expose_default_only":
            seen: set[str] = set()
            kept = []
            for d in out:
                if d.kind not in seen:
                    seen.add(d.kind)
                    kept.append(d)
            out = kept
        elif name == "add_dummy":
            kind = rule["kind"]
            if kind not in DEVICE_KINDS:
                raise InvalidValue(f"unknown device kind {kind!r}")
            ids = {d.device_id for d in out}
            n = 1
            while f"dummy-{n}" in ids:
                n += 1
            out = out + [DeviceInfo(f"dummy-{n}", kind, rule.get("label", f"Dummy {kind}"))]
        else:
            raise InvalidValue(f"unknown device rule {name!r}")
    return out


# --------------------------------------------------------------------------
# Peer configuration
# --------------------------------------------------------------------------

_SERVER_SCHEMES = ("stun:", "turn:", "turns:")


@dataclass
class IceServer:
    urls: list[str]
    username: Optional[str] = None
    credential: Optional[str] = None

    def validate(self) -> None:
        for url in self.urls:
            if not url.startswith(_SERVER_SCHEMES):
                raise InvalidServerUrl(f"ICE server url must use stun:/turn:/turns:, got {url!r}")

    def to_doc(self) -> dict:
        doc: dict = {"urls": list(self.urls)}
        if self.username is not None:
            doc["username"] = self.username
        if self.credential is not None:
            doc["credential"] = self.credential
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "IceServer":
        urls = doc["urls"]
        if isinstance(urls, str):
            urls = [urls]
        return cls(urls=list(urls), username=doc.get("username"),
                   credential=doc.get("credential"))


@dataclass
class PeerConfig:
    ice_servers: list[IceServer] = field(default_factory=list)
    ice_transport_policy: str = "all"

    def validate(self) -> None:
        for server in self.ice_servers:
            server.validate()
        if self.ice_transport_policy not in ("all", "relay"):
            raise InvalidValue(f"ice_transport_policy must be all|relay, got {self.ice_transport_policy!r}")

    def to_doc(self) -> dict:
        return {"ice_servers": [s.to_doc() for s in self.ice_servers],
                "ice_transport_policy": self.ice_transport_policy}

    @classmethod
    def from_doc(cls, doc: dict) -> "PeerConfig":
        return cls(ice_servers=[IceServer.from_doc(s) for s in doc.get("ice_servers", [])],
                   ice_transport_policy=doc.get("ice_transport_policy", "all"))


def transform_peer_config(cfg: PeerConfig, rules: list[dict]) -> PeerConfig:
    """Enterprise composition strip_servers + inject_server + relay_only
    leaves exactly the injected relay with a relay-only transport policy."""
    servers = [IceServer(list(s.urls), s.username, s.credential) for s in cfg.ice_servers]
    policy = cfg.ice_transport_policy
    for rule in rules:
        name = rule.get("rule")
        if name == "strip_servers":
            servers = []
        elif name == "inject_server":
            urls = rule.get("urls") or [rule["url"]]
            server = IceServer(urls=list(urls), username=rule.get("username"),
                               credential=rule.get("credential"))
            server.validate()
            servers.append(server)
        elif name == "relay_only":
            policy = "relay"
        else:
            raise InvalidValue(f"unknown peer-config rule {name!r}")
    return PeerConfig(ice_servers=servers, ice_transport_policy=policy)


# --------------------------------------------------------------------------
# Encoding limits
# --------------------------------------------------------------------------

@dataclass
class EncodingParams:
    max_bitrate_bps: Optional[int] = None
    max_framerate: Optional[float] = None
    scale_resolution_down_by: Optional[float] = None

    def validate(self) -> None:
        if self.max_bitrate_bps is not None and self.max_bitrate_bps <= 0:
            raise InvalidValue("max_bitrate_bps must be positive")
        if self.max_framerate is not None and self.max_framerate <= 0:
            raise InvalidValue("max_framerate must be positive")
        if self.scale_resolution_down_by is not None and self.scale_resolution_down_by < 1:
            raise InvalidValue("scale_resolution_down_by must be >= 1")

    def to_doc(self) -> dict:
        return {k: v for k, v in (("max_bitrate_bps", self.max_bitrate_bps),
                                  ("max_framerate", self.max_framerate),
                                  ("scale_resolution_down_by", self.scale_resolution_down_by))
                if v is not None}

    @classmethod
    def from_doc(cls, doc: dict) -> "EncodingParams":
        return cls(max_bitrate_bps=doc.get("max_bitrate_bps"),
                   max_framerate=doc.get("max_framerate"),
                   scale_resolution_down_by=doc.get("scale_resolution_down_by"))


def apply_encoding_limits(p: EncodingParams, limits: EncodingParams) -> EncodingParams:
    """Per-field tighten-only composition; absent limit fields change nothing.

    For the max_* fields tighter means smaller; for scale_resolution_down_by
    tighter means larger (more downscaling), so that field composes with max.
    """
    def tight_min(a, b):
        if b is None:
            return a
        return b if a is None else min(a, b)

    def tight_max(a, b):
        if b is None:
            return a
        return b if a is None else max(a, b)

    return EncodingParams(
        max_bitrate_bps=tight_min(p.max_bitrate_bps, limits.max_bitrate_bps),
        max_framerate=tight_min(p.max_framerate, limits.max_framerate),
        scale_resolution_down_by=tight_max(p.scale_resolution_down_by,
                                           limits.scale_resolution_down_by),
    )
