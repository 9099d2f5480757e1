"""ICE candidate parsing, address classification and policy filtering.

Candidate lines follow the ``candidate:`` attribute grammar (RFC 8839):

    candidate:<foundation> <component> <transport> <priority>
        <address> <port> typ <type> [raddr <addr>] [rport <port>] *(<key> <value>)

Filtering only changes what gets *signaled*; callers that also own a local
candidate list (the endpoint harness) keep using the unfiltered list for
connectivity, which reproduces the signaling-only reach of this kind of
interception.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .errors import InvalidAddress, MalformedCandidate

CANDIDATE_TYPES = ("host", "srflx", "prflx", "relay")

_HOSTNAME_RE = re.compile(r"^[A-Za-z0-9]([A-Za-z0-9\-]*[A-Za-z0-9])?(\.[A-Za-z0-9]([A-Za-z0-9\-]*[A-Za-z0-9])?)*\.?$")

_RFC1918 = (
    ipaddress.ip_network("10.0.0.0/8"),
    ipaddress.ip_network("172.16.0.0/12"),
    ipaddress.ip_network("192.168.0.0/16"),
)


class AddressClass(str, Enum):
    IPV4_PUBLIC = "ipv4_public"
    IPV4_PRIVATE = "ipv4_private"
    IPV6 = "ipv6"
    MDNS_HOSTNAME = "mdns_hostname"


@dataclass
class IceCandidate:
    foundation: str
    component: int
    transport: str  # udp | tcp
    priority: int
    address: str
    port: int
    cand_type: str  # host | srflx | prflx | relay
    related_address: Optional[str] = None
    related_port: Optional[int] = None
    extensions: list[tuple[str, str]] = field(default_factory=list)
    raw: str = ""

    def to_doc(self) -> dict:
        return {"candidate": serialize_candidate(self)}


def parse_candidate(line: str) -> IceCandidate:
    """Parse one candidate attribute; accepts the bare value or an ``a=`` line."""
    raw = line.strip()
    text = raw
    if text.startswith("a="):
        text = text[2:]
    if not text.startswith("candidate:"):
        raise MalformedCandidate(f"not a candidate line: {raw!r}")
    tokens = text[len("candidate:"):].split()
    if len(tokens) < 8 or tokens[6] != "typ":
        raise MalformedCandidate(f"bad candidate grammar: {raw!r}")
    try:
        foundation = tokens[0]
        component = int(tokens[1])
        transport = tokens[2].lower()
        priority = int(tokens[3])
        address = tokens[4]
        port = int(tokens[5])
    except ValueError as exc:
        raise MalformedCandidate(f"bad candidate field: {raw!r}") from exc
    cand_type = tokens[7]
    if transport not in ("udp", "tcp"):
        raise MalformedCandidate(f"unknown transport {transport!r}")
    if cand_type not in CANDIDATE_TYPES:
        raise MalformedCandidate(f"unknown candidate type {cand_type!r}")

    related_address = None
    related_port = None
    extensions: list[tuple[str, str]] = []
    rest = tokens[8:]
    i = 0
    while i < len(rest):
        key = rest[i]
        if i + 1 >= len(rest):
            raise MalformedCandidate(f"dangling extension key {key!r} in {raw!r}")
        value = rest[i + 1]
        if key == "raddr" and related_address is None:
            related_address = value
        elif key == "rport" and related_port is None:
            try:
                related_port = int(value)
            except ValueError as exc:
                raise MalformedCandidate(f"bad rport in {raw!r}") from exc
        else:
            extensions.append((key, value))
        i += 2

    return IceCandidate(foundation, component, transport, priority, address, port,
                        cand_type, related_address, related_port, extensions, raw=raw)


def serialize_candidate(c: IceCandidate) -> str:
    parts = [f"candidate:{c.foundation}", str(c.component), c.transport,
             str(c.priority), c.address, str(c.port), "typ", c.cand_type]
    if c.related_address is not None:
        parts += ["raddr", c.related_address]
    if c.related_port is not None:
        parts += ["rport", str(c.related_port)]
    for key, value in c.extensions:
        parts += [key, value]
    return " ".join(parts)


def classify_address(address: str) -> AddressClass:
    """Total classification of a candidate address.

    IPv4 literals split on the RFC 1918 private ranges (10/8, 172.16/12,
    192.168/16); IPv6 literals are one class; anything hostname-shaped is
    treated as an mDNS-style obfuscated name (".local" being the common case).
    """
    try:
        ip = ipaddress.ip_address(address)
    except ValueError:
        if _HOSTNAME_RE.match(address):
            return AddressClass.MDNS_HOSTNAME
        raise InvalidAddress(f"not an IP literal or hostname: {address!r}")
    if ip.version == 6:
        return AddressClass.IPV6
    return AddressClass.IPV4_PRIVATE if any(ip in net for net in _RFC1918) \
        else AddressClass.IPV4_PUBLIC


@dataclass
class CandidatePolicy:
    drop_ipv6: bool = False
    drop_private: bool = False
    relay_only: bool = False
    drop_host: bool = False

    @classmethod
    def from_params(cls, params: dict) -> "CandidatePolicy":
        return cls(drop_ipv6=bool(params.get("drop_ipv6", False)),
                   drop_private=bool(params.get("drop_private", False)),
                   relay_only=bool(params.get("relay_only", False)),
                   drop_host=bool(params.get("drop_host", False)))


def filter_candidates(candidates: list[IceCandidate], policy: CandidatePolicy) -> list[IceCandidate]:
    """Order-preserving subsequence of ``candidates`` allowed by ``policy``.

    ``relay_only`` subsumes every type-based rule: only relay candidates pass.
    Addresses that fail to classify are kept (the policy rules name specific
    classes, and unknown addresses match none of them).
    """
    out = []
    for cand in candidates:
        if policy.relay_only and cand.cand_type != "relay":
            continue
        if policy.drop_host and cand.cand_type == "host":
            continue
        try:
            cls = classify_address(cand.address)
        except InvalidAddress:
            cls = None
        if policy.drop_ipv6 and cls is AddressClass.IPV6:
            continue
        if policy.drop_private and cls is AddressClass.IPV4_PRIVATE:
            continue
        out.append(cand)
    return out


def copy_candidate(c: IceCandidate) -> IceCandidate:
    return replace(c, extensions=list(c.extensions))
