"""Simulated endpoints: negotiation, connectivity, data channels, scenarios."""

from __future__ import annotations

import json
import random

import pytest

from rtcwrench.catalog import default_catalog
from rtcwrench.controls import ControlsBus
from rtcwrench.engine import CategoryId, Engine, EngineSettings, TransformSpec
from rtcwrench.errors import ChannelVetoed, NoViablePair, NotOpen, WrongState
from rtcwrench.harness import (Codec, Harness, NetworkModel, Scenario,
                               ScenarioRunner, ScenarioStep, SimConnection,
                               default_candidates)
from rtcwrench.ice import IceCandidate
from rtcwrench.stats import StatsEngine


def make_harness(seed=7, settings=None):
    engine = Engine(default_catalog(), ControlsBus(),
                    settings or EngineSettings(seed=seed))
    return Harness(engine, StatsEngine())


def negotiate(harness, caller, callee):
    offer = harness.generate_offer(caller)
    harness.receive_offer(callee, offer)
    answer = harness.generate_answer(callee)
    applied = harness.apply_answer(caller, answer)
    return applied


def endpoints(harness, caller_codecs=None, callee_codecs=None):
    caller = harness.create_endpoint("caller", "caller", codec_set=caller_codecs)
    callee = harness.create_endpoint("callee", "callee", codec_set=callee_codecs)
    return caller, callee


# -- offer/answer ------------------------------------------------------------------

def test_offer_lists_codecs_in_set_order():
    harness = make_harness()
    caller, _ = endpoints(harness)
    offer = harness.generate_offer(caller)
    audio = offer.sections_of_kind("audio")[0]
    assert audio.payload_ids == [111, 0]
    assert caller.signaling_state == "have_local_offer"


def test_session_transform_applies_to_offer():
    harness = make_harness()
    harness.engine.install_transform(CategoryId.SESSION, TransformSpec(
        CategoryId.SESSION, "prefer_codec", params={"kind": "audio", "codec": "PCMU"}))
    caller, _ = endpoints(harness)
    offer = harness.generate_offer(caller)
    assert offer.sections_of_kind("audio")[0].payload_ids == [0, 111]


def test_double_offer_wrong_state():
    harness = make_harness()
    caller, _ = endpoints(harness)
    harness.generate_offer(caller)
    with pytest.raises(WrongState):
        harness.generate_offer(caller)


def test_answer_picks_first_common_codec():
    harness = make_harness()
    caller, callee = endpoints(
        harness,
        caller_codecs={"audio": [Codec(0, "PCMU", 8000), Codec(111, "opus", 48000, 2)]},
        callee_codecs={"audio": [Codec(111, "opus", 48000, 2), Codec(0, "PCMU", 8000)]})
    answer = negotiate(harness, caller, callee)
    # RFC 3264: offer preference wins -> PCMU
    assert harness.negotiated_codecs(answer)["audio"] == "PCMU"
    assert caller.signaling_state == "stable"
    assert callee.signaling_state == "stable"


def test_answer_rejects_section_without_common_codec():
    harness = make_harness()
    caller, callee = endpoints(
        harness,
        caller_codecs={"audio": [Codec(0, "PCMU", 8000)]},
        callee_codecs={"audio": [Codec(9, "G722", 8000)]})
    answer = negotiate(harness, caller, callee)
    assert answer.media_sections[0].port == 0
    assert harness.negotiated_codecs(answer)["audio"] is None


def test_videoless_callee_rejects_video_keeps_audio():
    harness = make_harness()
    caller, callee = endpoints(
        harness, callee_codecs={"audio": [Codec(111, "opus", 48000, 2)]})
    answer = negotiate(harness, caller, callee)
    negotiated = harness.negotiated_codecs(answer)
    assert negotiated["audio"] == "opus"
    assert negotiated["video"] is None
    video = answer.sections_of_kind("video")[0]
    assert video.port == 0


def test_negotiated_codec_member_of_both_sets():
    harness = make_harness()
    caller, callee = endpoints(harness)
    answer = negotiate(harness, caller, callee)
    negotiated = harness.negotiated_codecs(answer)
    for kind, name in negotiated.items():
        if name is None:
            continue
        assert name.lower() in {c.name.lower() for c in caller.codec_set[kind]}
        assert name.lower() in {c.name.lower() for c in callee.codec_set[kind]}


# -- candidates / connectivity --------------------------------------------------------

def test_signal_candidates_identity_without_transform():
    harness = make_harness()
    caller, _ = endpoints(harness)
    signaled = harness.signal_candidates(caller)
    assert signaled == caller.local_candidates


def test_filter_affects_signaling_only_local_list_unpruned():
    harness = make_harness()
    harness.engine.install_transform(CategoryId.NETWORK, TransformSpec(
        CategoryId.NETWORK, "filter_candidates", params={"drop_host": True}))
    caller, _ = endpoints(harness)
    signaled = harness.signal_candidates(caller)
    assert all(c.cand_type != "host" for c in signaled)
    assert any(c.cand_type == "host" for c in caller.local_candidates)


def test_paper_caveat_host_pair_despite_filtering():
    """Filtered-from-signaling host candidate still carries the media path."""
    harness = make_harness()
    harness.engine.install_transform(CategoryId.NETWORK, TransformSpec(
        CategoryId.NETWORK, "filter_candidates", params={"drop_host": True}))
    caller, callee = endpoints(harness)
    negotiate(harness, caller, callee)
    harness.signal_candidates(caller)
    harness.signal_candidates(callee)
    harness.receive_candidates(caller, callee.signaled_candidates)
    harness.receive_candidates(callee, caller.signaled_candidates)
    conn = SimConnection("sim-1", caller, callee)
    harness.connect(conn)
    local, remote = conn.selected_pair
    assert all(c.cand_type != "host" for c in callee.signaled_candidates)
    assert local.cand_type == "host"          # full local list still in play
    assert remote.cand_type != "host"


def test_connect_prefers_host_host():
    harness = make_harness()
    caller, callee = endpoints(harness)
    negotiate(harness, caller, callee)
    harness.signal_candidates(caller)
    harness.signal_candidates(callee)
    harness.receive_candidates(caller, callee.signaled_candidates)
    harness.receive_candidates(callee, caller.signaled_candidates)
    conn = harness.connect(SimConnection("sim-1", caller, callee))
    local, remote = conn.selected_pair
    assert (local.cand_type, remote.cand_type) == ("host", "host")
    assert conn.active


def test_connect_disjoint_transports_fails():
    harness = make_harness()
    caller = harness.create_endpoint("caller", "caller", candidates=[
        IceCandidate("1", 1, "udp", 100, "192.168.1.2", 1000, "host")])
    callee = harness.create_endpoint("callee", "callee", candidates=[
        IceCandidate("1", 1, "tcp", 100, "192.168.1.3", 1001, "host")])
    negotiate(harness, caller, callee)
    harness.signal_candidates(callee)
    harness.receive_candidates(caller, callee.signaled_candidates)
    with pytest.raises(NoViablePair):
        harness.connect(SimConnection("sim-1", caller, callee))


def test_connect_deterministic_tiebreak():
    harness = make_harness()
    twins = [IceCandidate("1", 1, "udp", 500, "10.0.0.1", 1000, "host"),
             IceCandidate("2", 1, "udp", 500, "10.0.0.2", 1000, "host")]
    caller = harness.create_endpoint("caller", "caller", candidates=twins)
    callee = harness.create_endpoint("callee", "callee", candidates=twins)
    negotiate(harness, caller, callee)
    harness.signal_candidates(callee)
    harness.receive_candidates(caller, callee.signaled_candidates)
    one = harness.connect(SimConnection("sim-1", caller, callee)).selected_pair
    two = harness.connect(SimConnection("sim-2", caller, callee)).selected_pair
    assert one == two
    assert one[0].address == "10.0.0.1"  # string order


def _connected(harness):
    caller, callee = endpoints(harness)
    negotiate(harness, caller, callee)
    harness.signal_candidates(caller)
    harness.signal_candidates(callee)
    harness.receive_candidates(caller, callee.signaled_candidates)
    harness.receive_candidates(callee, caller.signaled_candidates)
    return harness.connect(SimConnection("sim-1", caller, callee))


# -- data channels -----------------------------------------------------------------------

def test_datachannel_passthrough():
    harness = make_harness()
    conn = _connected(harness)
    harness.create_datachannel(conn, "chat")
    assert harness.send_data(conn, "chat", "hello") is True
    assert conn.channels["chat"].received[conn.callee.id] == ["hello"]


def test_datachannel_veto():
    harness = make_harness()
    conn = _connected(harness)
    harness.engine.install_transform(CategoryId.DATA,
                                     TransformSpec(CategoryId.DATA, "disable_data"))
    with pytest.raises(ChannelVetoed):
        harness.create_datachannel(conn, "chat")


def test_datachannel_uppercase_transform():
    harness = make_harness()
    conn = _connected(harness)
    harness.create_datachannel(conn, "chat")
    harness.engine.install_transform(CategoryId.DATA,
                                     TransformSpec(CategoryId.DATA, "uppercase_messages"))
    harness.send_data(conn, "chat", "hello")
    assert conn.channels["chat"].received[conn.callee.id] == ["HELLO"]


def test_send_on_closed_channel():
    harness = make_harness()
    conn = _connected(harness)
    harness.create_datachannel(conn, "chat")
    conn.channels["chat"].state = "closed"
    with pytest.raises(NotOpen):
        harness.send_data(conn, "chat", "x")


# -- synthetic stats --------------------------------------------------------------------

def test_stats_generator_byte_arithmetic():
    harness = make_harness()
    conn = _connected(harness)
    conn.model = NetworkModel(send_bitrate_bps=1_000_000, loss_fraction=0.0)
    harness.synthesize_stats(conn, 1000.0)
    report = harness.synthesize_stats(conn, 2000.0)
    assert report.entries["out-1"].fields["bytes_sent"] == 125_000


def test_stats_generator_zero_loss_constant_lost_counter():
    harness = make_harness()
    conn = _connected(harness)
    conn.model = NetworkModel(send_bitrate_bps=1_000_000, loss_fraction=0.0)
    losts = [harness.synthesize_stats(conn, 1000.0 * (i + 1))
             .entries["in-1"].fields["packets_lost"] for i in range(5)]
    assert losts == [0, 0, 0, 0, 0]


def test_derived_bitrate_matches_model_within_1pct():
    harness = make_harness()
    conn = _connected(harness)
    conn.model = NetworkModel(send_bitrate_bps=1_000_000, loss_fraction=0.05,
                              rtt_ms=100.0)
    for i in range(31):
        harness.synthesize_stats(conn, 1000.0 * (i + 1))
    send = harness.stats.query_series(conn.id, "send_bitrate_bps")
    assert len(send.points) == 30
    for _, value in send.points:
        assert abs(value - 1_000_000) / 1_000_000 < 0.01  # model rate
    recv = harness.stats.query_series(conn.id, "recv_bitrate_bps")
    for _, value in recv.points:
        assert abs(value - 950_000) / 950_000 < 0.01  # 5% of packets never arrive
    rtt = harness.stats.query_series(conn.id, "rtt_ms")
    assert all(v == 100.0 for _, v in rtt.points)


# -- scenarios ------------------------------------------------------------------------------

CALL_SCENARIO = {
    "name": "basic-call",
    "clock": "virtual",
    "network": {"send_bitrate_bps": 1_000_000, "loss_fraction": 0.0, "rtt_ms": 50},
    "steps": [
        {"at_ms": 0, "action": "call"},
        {"at_ms": 100, "action": "answer"},
        {"at_ms": 200, "action": "create_datachannel", "params": {"label": "chat"}},
        {"at_ms": 300, "action": "send_data",
         "params": {"label": "chat", "payload": "hi"}},
        {"at_ms": 5100, "action": "hangup"},
    ],
}


def run_scenario(doc, seed=7):
    harness = make_harness(seed)
    runner = ScenarioRunner(harness)
    return runner.run(Scenario.from_doc(doc)), harness


def test_scenario_full_call_transcript():
    result, _ = run_scenario(CALL_SCENARIO)
    assert result.error is None
    kinds = {e["event"] for e in result.transcript}
    assert {"step", "dispatch", "signal", "capture", "negotiated",
            "connected", "datachannel", "data", "stats", "hangup"} <= kinds
    offers = [e for e in result.transcript
              if e["event"] == "signal" and e["kind"] == "offer"]
    assert len(offers) == 1
    assert result.connection.negotiated["audio"] == "opus"


def test_scenario_polling_contract():
    # connection established at 100 ms, hangup at 5100 -> lifetime 5 s, I=1 s
    result, harness = run_scenario(CALL_SCENARIO)
    stats_events = [e for e in result.transcript if e["event"] == "stats"]
    assert abs(len(stats_events) - 5) <= 1
    assert harness.stats.report_count("sim-1") == len(stats_events)


def test_scenario_deterministic_transcripts():
    one = run_scenario(CALL_SCENARIO, seed=11)[0].to_ndjson()
    two = run_scenario(CALL_SCENARIO, seed=11)[0].to_ndjson()
    assert one == two


def test_scenario_set_network_loss_visible():
    doc = {
        "name": "loss-step",
        "network": {"send_bitrate_bps": 1_000_000, "loss_fraction": 0.0},
        "steps": [
            {"at_ms": 0, "action": "call"},
            {"at_ms": 0, "action": "answer"},
            {"at_ms": 2000, "action": "set_network", "params": {"loss_fraction": 0.05}},
            {"at_ms": 25000, "action": "hangup"},
        ],
    }
    result, harness = run_scenario(doc)
    assert result.error is None
    points = harness.stats.query_series("sim-1", "packet_loss_rate").points
    after = [v for t, v in points if t > 3000]
    assert len(after) >= 20
    mean = sum(after) / len(after)
    assert abs(mean - 0.05) / 0.05 < 0.10


def test_scenario_step_failure_partial_transcript():
    doc = {
        "name": "bad",
        "steps": [
            {"at_ms": 0, "action": "call"},
            {"at_ms": 10, "action": "send_data",
             "params": {"label": "nope", "payload": "x"}},  # channel never created
            {"at_ms": 20, "action": "answer"},
        ],
    }
    result, _ = run_scenario(doc)
    assert result.error is not None and result.error["step"] == 1
    assert any(e["event"] == "step" for e in result.transcript)
    answered = [e for e in result.transcript
                if e["event"] == "step" and e["action"] == "answer"]
    assert answered == []  # aborted before step 2


def test_scenario_validation():
    with pytest.raises(Exception):
        Scenario.from_doc({"name": "x", "steps": [
            {"at_ms": 10, "action": "call"}, {"at_ms": 0, "action": "answer"}]})
    with pytest.raises(Exception):
        Scenario.from_doc({"name": "x", "steps": [{"at_ms": 0, "action": "warp"}]})


def test_state_machine_never_undefined():
    """Random legal/illegal operation sequences either raise WrongState or
    land in a defined signaling state."""
    rng = random.Random(4)
    states = {"stable", "have_local_offer", "have_remote_offer"}
    for _ in range(60):
        harness = make_harness()
        caller, callee = endpoints(harness)
        last_offer = None
        last_answer = None
        for _ in range(12):
            op = rng.choice(["offer", "receive", "answer", "apply"])
            try:
                if op == "offer":
                    last_offer = harness.generate_offer(caller)
                elif op == "receive" and last_offer is not None:
                    harness.receive_offer(callee, last_offer)
                elif op == "answer":
                    last_answer = harness.generate_answer(callee)
                elif op == "apply" and last_answer is not None:
                    harness.apply_answer(caller, last_answer)
            except WrongState:
                pass
            assert caller.signaling_state in states
            assert callee.signaling_state in states


# -- dispatch completeness + signaling through the proxy -----------------------

def test_dispatch_completeness_counts():
    """Every signaling artifact crosses its category dispatch exactly once
    per direction for a basic call."""
    result, _ = run_scenario({
        "name": "completeness",
        "steps": [{"at_ms": 0, "action": "call"},
                  {"at_ms": 10, "action": "answer"},
                  {"at_ms": 20, "action": "create_datachannel", "params": {"label": "d"}},
                  {"at_ms": 30, "action": "send_data",
                   "params": {"label": "d", "payload": "x"}},
                  {"at_ms": 2040, "action": "hangup"}]})
    assert result.error is None
    counts = {}
    for e in result.transcript:
        if e["event"] == "dispatch":
            counts[(e["category"], e["context"])] = \
                counts.get((e["category"], e["context"]), 0) + 1
    assert counts[("Connect", "construct")] == 2            # one per endpoint
    assert counts[("Devices", "enumerateDevices")] == 2
    assert counts[("Media", "getUserMedia")] == 1           # caller captures
    assert counts[("Session", "createOffer")] == 1
    assert counts[("Session", "createAnswer")] == 1
    assert counts[("Session", "setRemoteDescription")] == 2  # offer in + answer in
    assert counts[("Network", "icecandidate")] == 2          # one signal per side
    assert counts[("Network", "addIceCandidate")] == 2       # one receive per side
    assert counts[("Data", "createDataChannel")] == 1
    assert counts[("Data", "send")] == 1
    assert counts[("Data", "message")] == 1
    stats_events = [e for e in result.transcript if e["event"] == "stats"]
    assert counts[("Stats", "getStats")] == len(stats_events)


def test_scenario_via_proxy_signaling():
    """Harness signaling rides the proxy when configured, so Socket-category
    transforms and fault policies apply to scenarios end-to-end."""
    from rtcwrench.proxy import SignalProxy
    from rtcwrench.clock import VirtualClock

    harness = make_harness()
    harness.proxy = SignalProxy(harness.engine, clock=VirtualClock())
    doc = dict(CALL_SCENARIO, via_proxy=True)
    result = ScenarioRunner(harness).run(Scenario.from_doc(doc))
    assert result.error is None
    assert result.connection.negotiated["audio"] == "opus"
    sessions = harness.proxy.sessions()
    assert len(sessions) == 1
    records, _ = harness.proxy.export_sequence(sessions[0].id)
    kinds = [json.loads(r.payload)["kind"] for r in records]
    assert kinds.count("offer") == 1
    assert kinds.count("answer") == 1
    assert kinds.count("candidates") == 2


def test_scenario_via_proxy_chaos_drop_aborts():
    """drop_prob=1 swallows the offer; the scenario aborts honestly."""
    from rtcwrench.proxy import FaultPolicy, SignalProxy
    from rtcwrench.clock import VirtualClock

    harness = make_harness()
    harness.proxy = SignalProxy(harness.engine, clock=VirtualClock(),
                                fault_policy=FaultPolicy(drop_prob=1.0))
    doc = dict(CALL_SCENARIO, via_proxy=True)
    result = ScenarioRunner(harness).run(Scenario.from_doc(doc))
    assert result.error is not None
    assert any(e["event"] == "signal_lost" for e in result.transcript)
