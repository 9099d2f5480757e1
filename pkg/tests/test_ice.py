"""Candidate grammar, address classification and policy filtering."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtcwrench.errors import InvalidAddress, MalformedCandidate
from rtcwrench.ice import (AddressClass, CandidatePolicy, IceCandidate,
                           classify_address, filter_candidates,
                           parse_candidate, serialize_candidate)

HOST_LINE = "candidate:1 1 udp 2122260223 192.168.1.2 54321 typ host"


def test_parse_host_candidate_fields():
    c = parse_candidate(HOST_LINE)
    assert c.cand_type == "host"
    assert c.address == "192.168.1.2"
    assert c.port == 54321
    assert c.priority == 2122260223
    assert c.component == 1
    assert c.transport == "udp"


def test_parse_srflx_with_related():
    c = parse_candidate("a=candidate:842163049 1 udp 1686052607 203.0.113.5 61481 "
                        "typ srflx raddr 192.168.1.2 rport 54321 generation 0")
    assert c.cand_type == "srflx"
    assert c.related_address == "192.168.1.2"
    assert c.related_port == 54321
    assert ("generation", "0") in c.extensions


def test_roundtrip_canonicalizes():
    line = "candidate:1 1 UDP 2122260223 192.168.1.2 54321 typ host tcptype passive"
    assert serialize_candidate(parse_candidate(line)) == \
        "candidate:1 1 udp 2122260223 192.168.1.2 54321 typ host tcptype passive"
    c = parse_candidate(HOST_LINE)
    assert parse_candidate(serialize_candidate(c)) == \
        IceCandidate(c.foundation, c.component, c.transport, c.priority, c.address,
                     c.port, c.cand_type, raw=serialize_candidate(c))


@pytest.mark.parametrize("bad", [
    "candidate:garbage",
    "candidate:1 1 udp 99 1.2.3.4 80 wrong host",
    "candidate:1 1 carrierpigeon 99 1.2.3.4 80 typ host",
    "candidate:1 1 udp 99 1.2.3.4 80 typ teleport",
    "candidate:1 one udp 99 1.2.3.4 80 typ host",
    "candidate:1 1 udp 99 1.2.3.4 80 typ host dangling",
    "notacandidate",
])
def test_malformed_candidates(bad):
    with pytest.raises(MalformedCandidate):
        parse_candidate(bad)


@pytest.mark.parametrize("address,expected", [
    ("192.168.1.2", AddressClass.IPV4_PRIVATE),
    ("10.0.0.1", AddressClass.IPV4_PRIVATE),
    ("172.16.0.1", AddressClass.IPV4_PRIVATE),
    ("172.31.255.255", AddressClass.IPV4_PRIVATE),
    ("172.32.0.1", AddressClass.IPV4_PUBLIC),
    ("8.8.8.8", AddressClass.IPV4_PUBLIC),
    ("203.0.113.5", AddressClass.IPV4_PUBLIC),
    ("2001:db8::1", AddressClass.IPV6),
    ("::1", AddressClass.IPV6),
    ("f47aca04-2f65-4e38-a21c-7f2d0f2ae7b7.local", AddressClass.MDNS_HOSTNAME),
    ("gw.example.com", AddressClass.MDNS_HOSTNAME),
])
def test_classify_address(address, expected):
    assert classify_address(address) == expected


def test_classify_rejects_garbage():
    with pytest.raises(InvalidAddress):
        classify_address("not valid!")


def _cand(cand_type="host", address="192.168.1.2", transport="udp", n=1):
    return IceCandidate(str(n), 1, transport, 100 - n, address, 50000 + n, cand_type)


def test_relay_only_filter():
    cands = [_cand("host"), _cand("srflx", "203.0.113.5", n=2),
             _cand("relay", "198.51.100.7", n=3)]
    out = filter_candidates(cands, CandidatePolicy(relay_only=True))
    assert [c.cand_type for c in out] == ["relay"]


def test_drop_private_filter():
    cands = [_cand("host", "192.168.1.2"), _cand("host", "203.0.113.5", n=2)]
    out = filter_candidates(cands, CandidatePolicy(drop_private=True))
    assert [c.address for c in out] == ["203.0.113.5"]


def test_empty_input():
    assert filter_candidates([], CandidatePolicy(relay_only=True)) == []


# -- property suite: predicate satisfaction, subsequence, idempotence ----------

_types = st.sampled_from(["host", "srflx", "prflx", "relay"])
_addresses = st.sampled_from([
    "192.168.1.7", "10.1.2.3", "172.20.0.9",          # private
    "8.8.4.4", "203.0.113.99", "198.51.100.3",        # public
    "2001:db8::2", "fe80::1", "::1",                   # ipv6
    "ab12cd34.local",                                   # mdns
])
_candidates = st.builds(
    IceCandidate,
    foundation=st.text("0123456789", min_size=1, max_size=4),
    component=st.sampled_from([1, 2]),
    transport=st.sampled_from(["udp", "tcp"]),
    priority=st.integers(1, 2 ** 31),
    address=_addresses,
    port=st.integers(1024, 65535),
    cand_type=_types,
)
_policies = st.builds(CandidatePolicy,
                      drop_ipv6=st.booleans(), drop_private=st.booleans(),
                      relay_only=st.booleans(), drop_host=st.booleans())


def _violates(c: IceCandidate, p: CandidatePolicy) -> bool:
    cls = classify_address(c.address)
    if p.relay_only and c.cand_type != "relay":
        return True
    if p.drop_host and c.cand_type == "host":
        return True
    if p.drop_ipv6 and cls is AddressClass.IPV6:
        return True
    if p.drop_private and cls is AddressClass.IPV4_PRIVATE:
        return True
    return False


@settings(max_examples=1000, deadline=None)
@given(cands=st.lists(_candidates, max_size=12), policy=_policies)
def test_filter_properties(cands, policy):
    out = filter_candidates(cands, policy)
    # every survivor satisfies the policy predicate
    assert not any(_violates(c, policy) for c in out)
    # output is a subsequence of input
    it = iter(cands)
    assert all(any(c is x for x in it) for c in out)
    # idempotent
    assert filter_candidates(out, policy) == out
    # relay_only subsumes drop_host
    if policy.relay_only:
        assert all(c.cand_type == "relay" for c in out)
