"""Constraint caps, device-list rules, peer config and encoding limits."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtcwrench import mediaconf as mc
from rtcwrench.errors import InvalidServerUrl, InvalidValue


def video(**bounds) -> mc.MediaConstraints:
    return mc.MediaConstraints(video=mc.TrackConstraints(**bounds))


# -- constraints -------------------------------------------------------------

def test_paper_cap_example():
    c = video(frame_rate=mc.Bound(ideal=30))
    out = mc.transform_constraints(c, [{"rule": "cap_framerate", "max_fps": 10},
                                       {"rule": "cap_resolution", "max_height": 320}])
    assert out.video.frame_rate.max == 10
    assert out.video.height.max == 320


def test_drop_audio():
    c = mc.MediaConstraints(audio=True, video=True)
    out = mc.transform_constraints(c, [{"rule": "drop_audio"}])
    assert out.audio is False and out.video is True


def test_caps_never_loosen():
    c = video(frame_rate=mc.Bound(max=5))
    out = mc.cap_framerate(c, 10)
    assert out.video.frame_rate.max == 5


def test_cap_clamps_ideal_to_max():
    out = mc.cap_framerate(video(frame_rate=mc.Bound(ideal=30)), 10)
    assert out.video.frame_rate.ideal == 10
    out.validate()


def test_cap_on_boolean_track():
    out = mc.cap_framerate(mc.MediaConstraints(video=True), 15)
    assert out.video.frame_rate.max == 15
    assert mc.cap_framerate(mc.MediaConstraints(video=False), 15).video is False


def test_force_device_and_facing():
    out = mc.transform_constraints(
        mc.MediaConstraints(),
        [{"rule": "force_device", "kind": "video", "device_id": "cam-2"},
         {"rule": "force_facing", "facing_mode": "environment"}])
    assert out.video.device_id == "cam-2"
    assert out.video.facing_mode == "environment"


def test_unknown_rule_rejected():
    with pytest.raises(InvalidValue):
        mc.transform_constraints(mc.MediaConstraints(), [{"rule": "nope"}])


def test_constraints_doc_roundtrip():
    c = video(frame_rate=mc.Bound(ideal=30, max=60), height=mc.Bound(max=720))
    assert mc.MediaConstraints.from_doc(c.to_doc()) == c


_bounds = st.one_of(
    st.none(),
    st.builds(mc.Bound,
              ideal=st.one_of(st.none(), st.floats(1, 10_000)),
              max=st.one_of(st.none(), st.floats(1, 10_000))))
_tracks = st.one_of(st.booleans(),
                    st.builds(mc.TrackConstraints, width=_bounds, height=_bounds,
                              frame_rate=_bounds))
_constraints = st.builds(mc.MediaConstraints, audio=_tracks, video=_tracks)
_cap_rules = st.lists(st.one_of(
    st.builds(lambda v: {"rule": "cap_framerate", "max_fps": v}, st.floats(1, 120)),
    st.builds(lambda v: {"rule": "cap_resolution", "max_height": v}, st.floats(90, 2160)),
), max_size=4)


def _bound_leq(after, before):
    if after is None or before is None:
        return True
    if before.max is not None:
        if after.max is None or after.max > before.max:
            return False
    if before.ideal is not None and after.ideal is not None \
            and after.ideal > before.ideal:
        return False
    return True


@settings(max_examples=1000, deadline=None)
@given(c=_constraints, rules=_cap_rules)
def test_tighten_only_property(c, rules):
    out = mc.transform_constraints(c, rules)
    for member in ("audio", "video"):
        before, after = getattr(c, member), getattr(out, member)
        if isinstance(before, bool) or isinstance(after, bool):
            continue
        for bname in ("width", "height", "frame_rate"):
            assert _bound_leq(getattr(after, bname), getattr(before, bname))


@settings(max_examples=200, deadline=None)
@given(c=_constraints, rules=_cap_rules)
def test_rule_list_equals_sequential_application(c, rules):
    combined = mc.transform_constraints(c, rules)
    stepwise = c
    for rule in rules:
        stepwise = mc.transform_constraints(stepwise, [rule])
    assert combined == stepwise


# -- devices ------------------------------------------------------------------

DEVICES = [
    mc.DeviceInfo("mic-1", "audioinput", "Built-in Microphone"),
    mc.DeviceInfo("mic-2", "audioinput", "Bad Mic 3000"),
    mc.DeviceInfo("cam-1", "videoinput", "FaceTime HD"),
    mc.DeviceInfo("cam-2", "videoinput", "ACME 4K Webcam"),
    mc.DeviceInfo("spk-1", "audiooutput", "Speakers"),
]


def test_hide_kind():
    out = mc.transform_devices(DEVICES, [{"rule": "hide_kind", "kind": "videoinput"}])
    assert all(d.kind != "videoinput" for d in out)
    assert len(out) == 3


def test_hide_label_pattern():
    out = mc.transform_devices(DEVICES, [{"rule": "hide_label_pattern",
                                          "pattern": "Bad Mic*"}])
    assert "mic-2" not in [d.device_id for d in out]
    assert len(out) == 4


def test_randomize_labels_properties():
    rng = random.Random(7)
    out = mc.transform_devices(DEVICES, [{"rule": "randomize_labels"}], rng=rng)
    assert len(out) == len(DEVICES)
    assert [d.device_id for d in out] == [d.device_id for d in DEVICES]
    assert [d.kind for d in out] == [d.kind for d in DEVICES]
    assert all(a.label != b.label for a, b in zip(out, DEVICES))


def test_randomize_labels_seed_determinism():
    one = mc.transform_devices(DEVICES, [{"rule": "randomize_labels"}],
                               rng=random.Random(7))
    two = mc.transform_devices(DEVICES, [{"rule": "randomize_labels"}],
                               rng=random.Random(7))
    other = mc.transform_devices(DEVICES, [{"rule": "randomize_labels"}],
                                 rng=random.Random(8))
    assert [d.label for d in one] == [d.label for d in two]
    assert [d.label for d in one] != [d.label for d in other]


def test_expose_default_only_keeps_first_per_kind():
    out = mc.transform_devices(DEVICES, [{"rule": "expose_default_only"}])
    assert [d.device_id for d in out] == ["mic-1", "cam-1", "spk-1"]


def test_add_dummy_fresh_id():
    out = mc.transform_devices(DEVICES, [{"rule": "add_dummy", "kind": "videoinput",
                                          "label": "Virtual Cam"}])
    assert out[-1].device_id == "dummy-1"
    again = mc.transform_devices(out, [{"rule": "add_dummy", "kind": "videoinput"}])
    assert again[-1].device_id == "dummy-2"


def test_device_id_stability():
    rules = [{"rule": "randomize_labels"}, {"rule": "hide_kind", "kind": "audiooutput"},
             {"rule": "expose_default_only"}]
    out = mc.transform_devices(DEVICES, rules, rng=random.Random(1))
    assert {d.device_id for d in out} <= {d.device_id for d in DEVICES}


# -- peer config ----------------------------------------------------------------

def test_enterprise_composition():
    cfg = mc.PeerConfig(ice_servers=[
        mc.IceServer(["stun:stun.l.google.com:19302"]),
        mc.IceServer(["turn:public.example.net:3478"], "u", "p"),
        mc.IceServer(["stun:stun1.example.org"]),
    ])
    out = mc.transform_peer_config(cfg, [
        {"rule": "strip_servers"},
        {"rule": "inject_server", "url": "turns:relay.corp.example:5349",
         "username": "corp", "credential": "secret"},
        {"rule": "relay_only"}])
    assert len(out.ice_servers) == 1
    assert out.ice_servers[0].urls == ["turns:relay.corp.example:5349"]
    assert out.ice_transport_policy == "relay"
    # input untouched
    assert len(cfg.ice_servers) == 3 and cfg.ice_transport_policy == "all"


def test_inject_rejects_bad_scheme():
    with pytest.raises(InvalidServerUrl):
        mc.transform_peer_config(mc.PeerConfig(),
                                 [{"rule": "inject_server", "url": "http://x"}])


def test_empty_rules_identity():
    cfg = mc.PeerConfig(ice_servers=[mc.IceServer(["stun:s.example"])])
    assert mc.transform_peer_config(cfg, []) == cfg


# -- encoding limits ---------------------------------------------------------------

def test_encoding_limit_fills_absent():
    out = mc.apply_encoding_limits(mc.EncodingParams(),
                                   mc.EncodingParams(max_bitrate_bps=300_000))
    assert out.max_bitrate_bps == 300_000


def test_encoding_limit_min_law():
    out = mc.apply_encoding_limits(mc.EncodingParams(max_bitrate_bps=250_000),
                                   mc.EncodingParams(max_bitrate_bps=300_000))
    assert out.max_bitrate_bps == 250_000


def test_encoding_limits_absent_identity():
    p = mc.EncodingParams(max_bitrate_bps=1_000_000, max_framerate=30.0,
                          scale_resolution_down_by=2.0)
    assert mc.apply_encoding_limits(p, mc.EncodingParams()) == p


def test_encoding_scale_tightens_upward():
    out = mc.apply_encoding_limits(mc.EncodingParams(scale_resolution_down_by=4.0),
                                   mc.EncodingParams(scale_resolution_down_by=2.0))
    assert out.scale_resolution_down_by == 4.0
