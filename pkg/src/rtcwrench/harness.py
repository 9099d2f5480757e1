"""Deterministic simulated WebRTC endpoints and the scenario runner.

Every signaling artifact crosses its category dispatch once per direction:
peer config through Connect at endpoint creation, capture constraints through
Media, device lists through Devices, offers/answers through Session (outgoing
``createOffer``/``createAnswer``, incoming ``setRemoteDescription``),
candidates through Network (outgoing ``icecandidate``, incoming
``addIceCandidate``), data messages through Data, stats reports through Stats.

Candidate filtering only affects the *signaled* list: connectivity selection
still draws the local half from the full local candidate list, so a filtered
host candidate can (and, when highest-priority, will) carry the media path —
the intercept layer's documented signaling-only reach.

On the virtual clock a run is fully deterministic: ids are fixed, randomness
flows from the engine seed, and transcripts serialize with sorted keys, so
two runs of one scenario are byte-identical.
"""

from __future__ import annotations


import json
import time
from dataclasses import dataclass, field
from typing import Any, Optional

from .clock import VirtualClock, WallClock
from .engine import (MODIFIED, SHORT_CIRCUIT, CategoryId, Engine,
                     InterceptContext)
from .errors import (ChannelVetoed, InvalidValue, NoViablePair, NotOpen,
                     StepFailed, WrongState)
from .ice import IceCandidate, copy_candidate, parse_candidate, serialize_candidate
from .mediaconf import DeviceInfo, EncodingParams, MediaConstraints, PeerConfig
from .proxy import SignalProxy
from .sdp import (DirectionLine, MediaSection, RawLine, RtpmapLine,
                  SessionDescription)
from .stats import StatsEngine, StatsEntry, StatsReport
from .transports import MemoryLink

SCENARIO_ACTIONS = ("call", "answer", "add_candidate", "create_datachannel",
                    "send_data", "set_network", "trigger_control", "hangup")


@dataclass
class Codec:
    pt: int
    name: str
    clock_rate: int
    channels: Optional[int] = None

    @classmethod
    def from_doc(cls, doc) -> "Codec":
        if isinstance(doc, (list, tuple)):
            return cls(*doc)
        return cls(doc["pt"], doc["name"], doc["clock_rate"], doc.get("channels"))


@dataclass
class NetworkModel:
    loss_fraction: float = 0.0
    rtt_ms: float = 50.0
    jitter_ms: float = 5.0
    send_bitrate_bps: float = 1_000_000.0
    video_height: float = 720.0
    video_fps: float = 30.0

    def validate(self) -> None:
        if not 0.0 <= self.loss_fraction <= 1.0:
            raise InvalidValue(f"loss_fraction must be in [0,1], got {self.loss_fraction}")
        for name in ("rtt_ms", "jitter_ms", "send_bitrate_bps"):
            if getattr(self, name) < 0:
                raise InvalidValue(f"{name} must be non-negative")

    @classmethod
    def from_doc(cls, doc: dict) -> "NetworkModel":
        model = cls(**{k: doc[k] for k in
                       ("loss_fraction", "rtt_ms", "jitter_ms", "send_bitrate_bps",
                        "video_height", "video_fps") if k in doc})
        model.validate()
        return model


DEFAULT_CODECS: dict[str, list[Codec]] = {
    "audio": [Codec(111, "opus", 48000, 2), Codec(0, "PCMU", 8000)],
    "video": [Codec(96, "VP8", 90000), Codec(98, "H264", 90000)],
}

DEFAULT_DEVICES = [
    DeviceInfo("mic-default", "audioinput", "Simulated Microphone"),
    DeviceInfo("cam-default", "videoinput", "Simulated Camera"),
    DeviceInfo("spk-default", "audiooutput", "Simulated Speakers"),
]


def default_candidates(last_octet: int) -> list[IceCandidate]:
    return [
        IceCandidate("1", 1, "udp", 2130706431, f"192.168.1.{last_octet}",
                     50000 + last_octet, "host"),
        IceCandidate("2", 1, "udp", 1694498815, f"203.0.113.{last_octet}",
                     51000 + last_octet, "srflx",
                     related_address=f"192.168.1.{last_octet}",
                     related_port=50000 + last_octet),
        IceCandidate("3", 1, "udp", 16777215, f"198.51.100.{last_octet}",
                     3478, "relay", related_address=f"203.0.113.{last_octet}",
                     related_port=51000 + last_octet),
    ]


STATE_STABLE = "stable"
STATE_HAVE_LOCAL_OFFER = "have_local_offer"
STATE_HAVE_REMOTE_OFFER = "have_remote_offer"


@dataclass
class SimEndpoint:
    id: str
    role: str                                   # caller | callee
    codec_set: dict[str, list[Codec]]
    local_candidates: list[IceCandidate]
    peer_config: PeerConfig = field(default_factory=PeerConfig)
    encoding: EncodingParams = field(default_factory=EncodingParams)
    devices: list[DeviceInfo] = field(default_factory=list)
    constraints: MediaConstraints = field(default_factory=MediaConstraints)
    signaling_state: str = STATE_STABLE
    remote_offer: Optional[SessionDescription] = None
    signaled_candidates: list[IceCandidate] = field(default_factory=list)
    received_candidates: list[IceCandidate] = field(default_factory=list)


@dataclass
class DataChannelSim:
    label: str
    state: str = "connecting"   # connecting | open | closed
    sent: list = field(default_factory=list)
    received: dict[str, list] = field(default_factory=dict)  # per endpoint id


@dataclass
class SimConnection:
    id: str
    caller: SimEndpoint
    callee: SimEndpoint
    negotiated: dict[str, Optional[str]] = field(default_factory=dict)
    selected_pair: Optional[tuple[IceCandidate, IceCandidate]] = None
    active: bool = False
    model: NetworkModel = field(default_factory=NetworkModel)
    channels: dict[str, DataChannelSim] = field(default_factory=dict)
    # float accumulators; reports carry their floors so counters stay integral
    _acc: dict = field(default_factory=lambda: {
        "bytes_sent": 0.0, "bytes_recv": 0.0, "pkts_sent": 0.0,
        "pkts_recv": 0.0, "pkts_lost": 0.0, "last_t": None})


class Harness:
    """Builds endpoints, negotiates sessions, simulates connectivity and
    generates stats; every artifact crosses the category engine."""

    PACKET_BYTES = 1000.0

    def __init__(self, engine: Engine, stats_engine: Optional[StatsEngine] = None,
                 proxy: Optional[SignalProxy] = None,
                 default_network: Optional[NetworkModel] = None,
                 default_codecs: Optional[dict[str, list[Codec]]] = None):
        self.engine = engine
        self.stats = stats_engine or StatsEngine()
        self.proxy = proxy
        self.default_network = default_network or NetworkModel()
        self.default_codecs = default_codecs or DEFAULT_CODECS

    # -- endpoint lifecycle ---------------------------------------------------

    def create_endpoint(self, endpoint_id: str, role: str,
                        codec_set: Optional[dict[str, list[Codec]]] = None,
                        candidates: Optional[list[IceCandidate]] = None,
                        peer_config: Optional[PeerConfig] = None,
                        devices: Optional[list[DeviceInfo]] = None) -> SimEndpoint:
        self.engine.reset_session(endpoint_id)
        config = peer_config or PeerConfig(
            ice_servers=[], ice_transport_policy="all")
        outcome = self.engine.dispatch(
            CategoryId.CONNECT,
            InterceptContext(context="construct", kind="method", session_id=endpoint_id),
            config)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, PeerConfig):
            config = outcome.payload

        device_list = list(devices if devices is not None else DEFAULT_DEVICES)
        dev_outcome = self.engine.dispatch(
            CategoryId.DEVICES,
            InterceptContext(context="enumerateDevices", kind="method",
                             session_id=endpoint_id),
            device_list)
        if dev_outcome.kind == MODIFIED and isinstance(dev_outcome.payload, list):
            device_list = dev_outcome.payload

        return SimEndpoint(
            id=endpoint_id, role=role,
            codec_set={k: list(v) for k, v in (codec_set or self.default_codecs).items()},
            local_candidates=[copy_candidate(c) for c in
                              (candidates if candidates is not None
                               else default_candidates(10 if role == "caller" else 11))],
            peer_config=config, devices=device_list)

    def capture(self, ep: SimEndpoint, constraints: Optional[MediaConstraints] = None) -> MediaConstraints:
        wanted = constraints or MediaConstraints()
        outcome = self.engine.dispatch(
            CategoryId.MEDIA,
            InterceptContext(context="getUserMedia", kind="method", session_id=ep.id),
            wanted)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, MediaConstraints):
            wanted = outcome.payload
        ep.constraints = wanted
        return wanted

    # -- offer/answer -----------------------------------------------------------

    def _build_offer(self, ep: SimEndpoint) -> SessionDescription:
        sd = SessionDescription(sdp_type="offer", session_lines=[
            RawLine("v=0"), RawLine("o=- 1000 2 IN IP4 127.0.0.1"),
            RawLine("s=-"), RawLine("t=0 0")])
        for mid, (kind, codecs) in enumerate(ep.codec_set.items()):
            section = MediaSection(kind=kind, port=9, protocol="UDP/TLS/RTP/SAVPF",
                                   fmt=[str(c.pt) for c in codecs])
            section.body.append(RawLine("c=IN IP4 0.0.0.0"))
            section.body.append(RawLine(f"a=mid:{mid}"))
            section.body.append(DirectionLine("sendrecv"))
            for codec in codecs:
                section.body.append(RtpmapLine(codec.pt, codec.name,
                                               codec.clock_rate, codec.channels))
            sd.media_sections.append(section)
        return sd

    def generate_offer(self, ep: SimEndpoint) -> SessionDescription:
        if ep.signaling_state != STATE_STABLE:
            raise WrongState(f"{ep.id}: cannot offer in state {ep.signaling_state}")
        offer = self._build_offer(ep)
        outcome = self.engine.dispatch(
            CategoryId.SESSION,
            InterceptContext(context="createOffer", kind="method", session_id=ep.id,
                             objects={"connection": ep}),
            offer)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, SessionDescription):
            offer = outcome.payload
        ep.signaling_state = STATE_HAVE_LOCAL_OFFER
        return offer

    def receive_offer(self, ep: SimEndpoint, offer: SessionDescription) -> SessionDescription:
        if ep.signaling_state != STATE_STABLE:
            raise WrongState(f"{ep.id}: cannot receive offer in state {ep.signaling_state}")
        outcome = self.engine.dispatch(
            CategoryId.SESSION,
            InterceptContext(context="setRemoteDescription", kind="method",
                             session_id=ep.id, objects={"connection": ep}),
            offer)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, SessionDescription):
            offer = outcome.payload
        ep.remote_offer = offer
        ep.signaling_state = STATE_HAVE_REMOTE_OFFER
        return offer

    def generate_answer(self, ep: SimEndpoint) -> SessionDescription:
        """RFC 3264 answer: per section, the common codec subset in offer
        preference order; no common codec (or unsupported kind) rejects the
        section with port 0."""
        if ep.signaling_state != STATE_HAVE_REMOTE_OFFER or ep.remote_offer is None:
            raise WrongState(f"{ep.id}: cannot answer in state {ep.signaling_state}")
        offer = ep.remote_offer
        answer = SessionDescription(sdp_type="answer", session_lines=[
            RawLine("v=0"), RawLine("o=- 2000 2 IN IP4 127.0.0.1"),
            RawLine("s=-"), RawLine("t=0 0")])
        for mid, section in enumerate(offer.media_sections):
            own = {c.name.lower(): c for c in ep.codec_set.get(section.kind, [])}
            rtpmap = section.rtpmap
            common = [pt for pt in section.payload_ids
                      if pt in rtpmap and rtpmap[pt].codec.lower() in own]
            if common:
                out = MediaSection(kind=section.kind, port=9,
                                   protocol=section.protocol,
                                   fmt=[str(pt) for pt in common])
            else:
                out = MediaSection(kind=section.kind, port=0,
                                   protocol=section.protocol,
                                   fmt=list(section.fmt))
            out.body.append(RawLine("c=IN IP4 0.0.0.0"))
            out.body.append(RawLine(f"a=mid:{mid}"))
            out.body.append(DirectionLine("sendrecv"))
            for pt in (common if common else []):
                entry = rtpmap[pt]
                out.body.append(RtpmapLine(pt, entry.codec, entry.clock_rate,
                                           entry.channels))
            answer.media_sections.append(out)

        outcome = self.engine.dispatch(
            CategoryId.SESSION,
            InterceptContext(context="createAnswer", kind="method", session_id=ep.id,
                             objects={"connection": ep}),
            answer)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, SessionDescription):
            answer = outcome.payload
        ep.signaling_state = STATE_STABLE
        return answer

    def apply_answer(self, ep: SimEndpoint, answer: SessionDescription) -> SessionDescription:
        if ep.signaling_state != STATE_HAVE_LOCAL_OFFER:
            raise WrongState(f"{ep.id}: cannot apply answer in state {ep.signaling_state}")
        outcome = self.engine.dispatch(
            CategoryId.SESSION,
            InterceptContext(context="setRemoteDescription", kind="method",
                             session_id=ep.id, objects={"connection": ep}),
            answer)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, SessionDescription):
            answer = outcome.payload
        ep.signaling_state = STATE_STABLE
        return answer

    @staticmethod
    def negotiated_codecs(answer: SessionDescription) -> dict[str, Optional[str]]:
        negotiated: dict[str, Optional[str]] = {}
        for section in answer.media_sections:
            if section.port == 0 or not section.payload_ids:
                negotiated.setdefault(section.kind, None)
                continue
            first = section.payload_ids[0]
            entry = section.rtpmap.get(first)
            negotiated[section.kind] = entry.codec if entry else str(first)
        return negotiated

    # -- candidates and connectivity ------------------------------------------------

    def signal_candidates(self, ep: SimEndpoint,
                          candidates: Optional[list[IceCandidate]] = None) -> list[IceCandidate]:
        """Pass candidates through Network dispatch; survivors are what the
        remote side sees. The local list itself is never pruned."""
        batch = list(candidates if candidates is not None else ep.local_candidates)
        outcome = self.engine.dispatch(
            CategoryId.NETWORK,
            InterceptContext(context="icecandidate", kind="event", session_id=ep.id,
                             objects={"connection": ep}),
            batch)
        survivors = outcome.payload if outcome.kind == MODIFIED \
            and isinstance(outcome.payload, list) else batch
        if candidates is None:
            ep.signaled_candidates = list(survivors)
        else:
            ep.signaled_candidates.extend(survivors)
        return list(survivors)

    def receive_candidates(self, ep: SimEndpoint,
                           candidates: list[IceCandidate]) -> list[IceCandidate]:
        outcome = self.engine.dispatch(
            CategoryId.NETWORK,
            InterceptContext(context="addIceCandidate", kind="method", session_id=ep.id,
                             objects={"connection": ep}),
            list(candidates))
        accepted = outcome.payload if outcome.kind == MODIFIED \
            and isinstance(outcome.payload, list) else list(candidates)
        ep.received_candidates.extend(accepted)
        return accepted

    def connect(self, conn: SimConnection) -> SimConnection:
        """Select the transport pair: full local list of the caller against
        what the callee signaled, highest combined priority first, ties broken
        by candidate string order."""
        best = None
        for local in conn.caller.local_candidates:
            for remote in conn.caller.received_candidates:
                if local.transport != remote.transport:
                    continue
                key = (-(local.priority + remote.priority),
                       serialize_candidate(local), serialize_candidate(remote))
                if best is None or key < best[0]:
                    best = (key, local, remote)
        if best is None:
            raise NoViablePair("no transport-compatible candidate pair")
        conn.selected_pair = (best[1], best[2])
        conn.active = True
        conn._acc["last_t"] = None
        for channel in conn.channels.values():
            if channel.state == "connecting":
                channel.state = "open"
        return conn

    # -- data channels -----------------------------------------------------------------

    def create_datachannel(self, conn: SimConnection, label: str,
                           creator: Optional[SimEndpoint] = None) -> DataChannelSim:
        creator = creator or conn.caller
        outcome = self.engine.dispatch(
            CategoryId.DATA,
            InterceptContext(context="createDataChannel", kind="method",
                             session_id=conn.id,
                             objects={"connection": conn}),
            label)
        if outcome.kind == SHORT_CIRCUIT:
            raise ChannelVetoed(f"data channel {label!r} vetoed by transform")
        if outcome.kind == MODIFIED and isinstance(outcome.payload, str):
            label = outcome.payload
        channel = DataChannelSim(label=label,
                                 state="open" if conn.active else "connecting")
        channel.received = {conn.caller.id: [], conn.callee.id: []}
        conn.channels[label] = channel
        return channel

    def send_data(self, conn: SimConnection, label: str, payload,
                  sender: Optional[SimEndpoint] = None) -> bool:
        """Returns True when the payload reached the receiver's log."""
        channel = conn.channels.get(label)
        if channel is None or channel.state != "open" or not conn.active:
            raise NotOpen(f"data channel {label!r} is not open")
        sender = sender or conn.caller
        receiver = conn.callee if sender is conn.caller else conn.caller

        out = self.engine.dispatch(
            CategoryId.DATA,
            InterceptContext(context="send", kind="method", session_id=conn.id,
                             objects={"connection": conn, "channel": channel}),
            payload)
        if out.kind == SHORT_CIRCUIT:
            return False
        payload = out.payload
        channel.sent.append(payload)

        incoming = self.engine.dispatch(
            CategoryId.DATA,
            InterceptContext(context="message", kind="event", session_id=conn.id,
                             objects={"connection": conn, "channel": channel}),
            payload)
        if incoming.kind == SHORT_CIRCUIT:
            return False
        channel.received[receiver.id].append(incoming.payload)
        return True

    # -- synthetic stats ------------------------------------------------------------------

    def synthesize_stats(self, conn: SimConnection, at_ms: float) -> StatsReport:
        """Advance the traffic model to ``at_ms`` and emit one report; the
        report crosses Stats dispatch and feeds the stats engine."""
        acc = conn._acc
        if acc["last_t"] is None:
            acc["last_t"] = at_ms
        dt_s = max(0.0, (at_ms - acc["last_t"]) / 1000.0)
        acc["last_t"] = at_ms

        model = conn.model
        new_bytes = model.send_bitrate_bps * dt_s / 8.0
        new_pkts = new_bytes / self.PACKET_BYTES
        acc["bytes_sent"] += new_bytes
        acc["bytes_recv"] += new_bytes * (1.0 - model.loss_fraction)
        acc["pkts_sent"] += new_pkts
        acc["pkts_lost"] += new_pkts * model.loss_fraction
        acc["pkts_recv"] += new_pkts * (1.0 - model.loss_fraction)

        report = StatsReport(conn.id, at_ms)
        report.add(StatsEntry("out-1", "outbound-rtp", at_ms, {
            "bytes_sent": int(acc["bytes_sent"]),
            "packets_sent": int(acc["pkts_sent"])}))
        report.add(StatsEntry("in-1", "inbound-rtp", at_ms, {
            "bytes_received": int(acc["bytes_recv"]),
            "packets_received": int(acc["pkts_recv"]),
            "packets_lost": int(acc["pkts_lost"]),
            "jitter_s": model.jitter_ms / 1000.0,
            "frame_height": model.video_height,
            "frames_per_second": model.video_fps}))
        report.add(StatsEntry("pair-1", "candidate-pair", at_ms, {
            "current_rtt_s": model.rtt_ms / 1000.0,
            "available_outgoing_bitrate": model.send_bitrate_bps}))

        outcome = self.engine.dispatch(
            CategoryId.STATS,
            InterceptContext(context="getStats", kind="method", session_id=conn.id,
                             objects={"connection": conn}),
            report)
        if outcome.kind == MODIFIED and isinstance(outcome.payload, StatsReport):
            report = outcome.payload
        self.stats.ingest_report(report)
        return report


# --------------------------------------------------------------------------
# Scenarios
# --------------------------------------------------------------------------

@dataclass
class ScenarioStep:
    at_ms: float
    action: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    steps: list[ScenarioStep]
    clock: str = "virtual"              # virtual | wall
    via_proxy: bool = False
    constraints: Optional[dict] = None  # capture constraints for the call step
    network: Optional[dict] = None      # initial NetworkModel overrides
    endpoints: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.clock not in ("virtual", "wall"):
            raise InvalidValue(f"scenario clock must be virtual|wall, got {self.clock!r}")
        last = float("-inf")
        for i, step in enumerate(self.steps):
            if step.action not in SCENARIO_ACTIONS:
                raise InvalidValue(f"step {i}: unknown action {step.action!r}")
            if step.at_ms < last:
                raise InvalidValue(f"step {i}: at_ms must be non-decreasing")
            last = step.at_ms

    @classmethod
    def from_doc(cls, doc: dict) -> "Scenario":
        scenario = cls(
            name=doc.get("name", "scenario"),
            clock=doc.get("clock", "virtual"),
            via_proxy=bool(doc.get("via_proxy", False)),
            constraints=doc.get("constraints"),
            network=doc.get("network"),
            endpoints=doc.get("endpoints", {}),
            steps=[ScenarioStep(float(s["at_ms"]), s["action"], dict(s.get("params", {})))
                   for s in doc.get("steps", [])])
        scenario.validate()
        return scenario


@dataclass
class ScenarioResult:
    name: str
    transcript: list[dict]
    error: Optional[dict] = None
    connection: Optional[SimConnection] = None
    caller: Optional[SimEndpoint] = None
    callee: Optional[SimEndpoint] = None

    def to_ndjson(self) -> str:
        return "".join(json.dumps(event, sort_keys=True, default=str) + "\n"
                       for event in self.transcript)


class ScenarioRunner:
    """Executes scenario steps on a virtual or wall clock, recording every
    dispatch, signaling message, control event and stats report."""

    def __init__(self, harness: Harness, clock=None, connection_id: str = "sim-1"):
        self.harness = harness
        self.engine = harness.engine
        self.clock = clock
        self.connection_id = connection_id

    def run(self, scenario: Scenario) -> ScenarioResult:
        scenario.validate()
        clock = self.clock or (VirtualClock() if scenario.clock == "virtual" else WallClock())
        transcript: list[dict] = []
        interval = self._poll_interval()

        def record(event: str, **fields) -> None:
            fields["event"] = event
            fields["t_ms"] = clock.now_ms()
            transcript.append(fields)

        def on_dispatch(category, ctx, outcome):
            record("dispatch", category=category.value, context=ctx.context,
                   session=ctx.session_id, outcome=outcome.kind,
                   error=outcome.error)

        for sid in ("caller", "callee", self.connection_id):
            self.engine.reset_session(sid)
        control_sub = self.engine.controls.subscribe("*")
        self.engine.add_dispatch_listener(on_dispatch)

        link = None
        if scenario.via_proxy and self.harness.proxy is not None:
            link = MemoryLink(self.harness.proxy, upstream_url="ws://callee.sim/signaling",
                              client_endpoint="caller.sim")

        result = ScenarioResult(scenario.name, transcript)
        try:
            caller = self.harness.create_endpoint(
                "caller", "caller", **self._endpoint_kwargs(scenario, "caller"))
            callee = self.harness.create_endpoint(
                "callee", "callee", **self._endpoint_kwargs(scenario, "callee"))
            conn = SimConnection(self.connection_id, caller, callee)
            conn.model = NetworkModel.from_doc(
                self.harness.default_network.__dict__ | (scenario.network or {}))
            result.connection, result.caller, result.callee = conn, caller, callee

            next_poll: Optional[float] = None
            for index, step in enumerate(scenario.steps):
                next_poll = self._advance(clock, scenario, conn, step.at_ms,
                                          next_poll, interval, record)
                record("step", index=index, action=step.action, params=step.params)
                try:
                    next_poll = self._execute(scenario, step, conn, link, record,
                                              next_poll, interval, clock)
                except Exception as exc:
                    raise StepFailed(index, exc) from exc
        except StepFailed as failure:
            result.error = {"step": failure.index, "cause": str(failure.cause)}
            record("aborted", step=failure.index, cause=str(failure.cause))
        finally:
            self.engine.remove_dispatch_listener(on_dispatch)
            for event in control_sub.poll():
                transcript.append({"event": "control", "t_ms": clock.now_ms(),
                                   **event.to_doc()})
            self.engine.controls.unsubscribe(control_sub)
            transcript.sort(key=lambda e: e["t_ms"])
        return result

    # -- step execution ------------------------------------------------------------

    def _execute(self, scenario, step, conn, link, record, next_poll, interval, clock):
        harness, params = self.harness, step.params

        if step.action == "call":
            constraints = MediaConstraints.from_doc(
                params.get("constraints") or scenario.constraints or
                {"audio": True, "video": {"frame_rate": {"ideal": 30}, "height": {"ideal": 720}}})
            effective = harness.capture(conn.caller, constraints)
            record("capture", endpoint=conn.caller.id, constraints=effective.to_doc())
            offer = harness.generate_offer(conn.caller)
            offer = self._deliver(link, "c2s", "offer", offer.to_doc(), record)
            if offer is not None:
                harness.receive_offer(conn.callee, SessionDescription.from_doc(offer))

        elif step.action == "answer":
            answer = harness.generate_answer(conn.callee)
            answer_doc = self._deliver(link, "s2c", "answer", answer.to_doc(), record)
            if answer_doc is not None:
                applied = harness.apply_answer(conn.caller,
                                               SessionDescription.from_doc(answer_doc))
                conn.negotiated = harness.negotiated_codecs(applied)
                record("negotiated", codecs=conn.negotiated)
            for ep, direction, peer in ((conn.caller, "c2s", conn.callee),
                                        (conn.callee, "s2c", conn.caller)):
                signaled = harness.signal_candidates(ep)
                lines = [serialize_candidate(c) for c in signaled]
                doc = self._deliver(link, direction, "candidates", lines, record)
                if doc is not None:
                    harness.receive_candidates(peer, [parse_candidate(l) for l in doc])
            harness.connect(conn)
            pair = conn.selected_pair
            record("connected",
                   pair=[serialize_candidate(pair[0]), serialize_candidate(pair[1])])
            return clock.now_ms() + interval  # stats polling starts now

        elif step.action == "add_candidate":
            ep = conn.caller if params.get("endpoint", "caller") == "caller" else conn.callee
            peer = conn.callee if ep is conn.caller else conn.caller
            cand = parse_candidate(params["candidate"])
            ep.local_candidates.append(cand)
            survivors = harness.signal_candidates(ep, [cand])
            lines = [serialize_candidate(c) for c in survivors]
            direction = "c2s" if ep is conn.caller else "s2c"
            doc = self._deliver(link, direction, "candidates", lines, record)
            if doc:
                harness.receive_candidates(peer, [parse_candidate(l) for l in doc])

        elif step.action == "create_datachannel":
            channel = harness.create_datachannel(conn, params["label"])
            record("datachannel", label=channel.label, state=channel.state)

        elif step.action == "send_data":
            delivered = harness.send_data(conn, params["label"], params["payload"])
            record("data", label=params["label"], delivered=delivered)

        elif step.action == "set_network":
            doc = conn.model.__dict__ | {k: v for k, v in params.items()
                                         if k in NetworkModel().__dict__}
            conn.model = NetworkModel.from_doc(doc)
            record("network", model=doc)

        elif step.action == "trigger_control":
            mode = params.get("mode", "set")
            if mode == "set":
                self.engine.controls.set(params["name"], params["value"])
            elif mode == "trigger":
                self.engine.controls.trigger(params["name"], params.get("value", True))
            elif mode == "delete":
                self.engine.controls.delete(params["name"])
            else:
                raise InvalidValue(f"unknown trigger_control mode {mode!r}")

        elif step.action == "hangup":
            conn.active = False
            for channel in conn.channels.values():
                channel.state = "closed"
            conn.caller.signaling_state = STATE_STABLE
            conn.callee.signaling_state = STATE_STABLE
            record("hangup")
            return None  # stop polling

        return next_poll

    def _deliver(self, link, direction, kind, doc, record):
        """Route one signaling message, through the proxy link when present."""
        record("signal", direction=direction, kind=kind, payload=doc)
        if link is None:
            return doc
        target = link.to_upstream if direction == "c2s" else link.to_client
        before = len(target)
        link.send(direction, json.dumps({"kind": kind, "body": doc}, sort_keys=True))
        if len(target) == before:  # consumed or dropped in transit
            record("signal_lost", direction=direction, kind=kind)
            return None
        delivered = json.loads(target[-1])
        return delivered["body"]

    def _advance(self, clock, scenario, conn, target_ms, next_poll, interval, record):
        """Move time to ``target_ms``, emitting stats reports at every poll
        tick while the connection is active."""
        while next_poll is not None and conn.active and next_poll <= target_ms:
            self._sleep_until(clock, scenario, next_poll)
            report = self.harness.synthesize_stats(conn, next_poll)
            metrics = self.harness.stats.query_series(conn.id, "recv_bitrate_bps")
            record("stats", session=conn.id, entries=len(report.entries),
                   points=len(metrics.points))
            next_poll += interval
        self._sleep_until(clock, scenario, target_ms)
        return next_poll

    @staticmethod
    def _sleep_until(clock, scenario, t_ms):
        if t_ms <= clock.now_ms():
            return
        if scenario.clock == "virtual":
            clock.advance_to(t_ms)
        else:
            time.sleep((t_ms - clock.now_ms()) / 1000.0)

    def _poll_interval(self) -> float:
        spec = self.engine.installed(CategoryId.STATS)
        if spec is not None:
            override = spec.params.get("interval_ms")
            if override:
                return float(override)
        return float(self.engine.settings.stats_interval_ms)

    def _endpoint_kwargs(self, scenario: Scenario, which: str) -> dict:
        doc = scenario.endpoints.get(which, {})
        kwargs: dict[str, Any] = {}
        if "codecs" in doc:
            kwargs["codec_set"] = {kind: [Codec.from_doc(c) for c in codecs]
                                   for kind, codecs in doc["codecs"].items()}
        if "candidates" in doc:
            kwargs["candidates"] = [parse_candidate(c) for c in doc["candidates"]]
        if "peer_config" in doc:
            kwargs["peer_config"] = PeerConfig.from_doc(doc["peer_config"])
        return kwargs
