"""Session description parsing, rewriting and serialization.

The model is deliberately narrow: it fully structures only the lines the
rewrites touch (m= payload list, rtpmap/fmtp/rtcp-fb, direction, b=AS,
candidates) and carries every other line verbatim in its original position.
Real-world SDP is dialect-rich; preserving unknown lines byte-for-byte is
what keeps rewrites safe on descriptions this library has never seen.

Canonical output uses CR LF line endings; the parser also accepts bare LF.
"""

from __future__ import annotations

import copy
import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import InvalidValue, MalformedCandidate, MalformedLine, MissingMandatory
from .ice import IceCandidate, parse_candidate, serialize_candidate

log = logging.getLogger(__name__)

DIRECTIONS = ("sendrecv", "sendonly", "recvonly", "inactive")
FEC_CODECS = ("red", "ulpfec", "flexfec-03")

# "G.711" names the PCMU/PCMA family generically; PCMU ranks first.
_G711_ALIASES = ("g.711", "g711")
_G711_FAMILY = ("pcmu", "pcma")


# --------------------------------------------------------------------------
# Line model: each parsed line knows how to re-emit itself. Unrecognized
# lines stay RawLine and re-emit verbatim.
# --------------------------------------------------------------------------

@dataclass
class RawLine:
    text: str

    def render(self) -> str:
        return self.text


@dataclass
class RtpmapLine:
    pt: int
    codec: str
    clock_rate: int
    channels: Optional[int] = None

    def render(self) -> str:
        tail = f"/{self.channels}" if self.channels is not None else ""
        return f"a=rtpmap:{self.pt} {self.codec}/{self.clock_rate}{tail}"


@dataclass
class FmtpLine:
    pt: int
    params: dict[str, Optional[str]]

    def render(self) -> str:
        body = ";".join(k if v is None else f"{k}={v}" for k, v in self.params.items())
        return f"a=fmtp:{self.pt} {body}"


@dataclass
class RtcpFbLine:
    pt: int
    token: str

    def render(self) -> str:
        return f"a=rtcp-fb:{self.pt} {self.token}"


@dataclass
class DirectionLine:
    value: str

    def render(self) -> str:
        return f"a={self.value}"


@dataclass
class BandwidthLine:
    kbps: int

    def render(self) -> str:
        return f"b=AS:{self.kbps}"


@dataclass
class CandidateLine:
    candidate: IceCandidate

    def render(self) -> str:
        return f"a={serialize_candidate(self.candidate)}"


SectionLine = Union[RawLine, RtpmapLine, FmtpLine, RtcpFbLine, DirectionLine,
                    BandwidthLine, CandidateLine]


@dataclass
class MediaSection:
    kind: str                      # audio | video | application | ...
    port: int
    protocol: str
    fmt: list[str]                 # m= format tokens in order (usually payload ids)
    port_count: Optional[int] = None
    body: list[SectionLine] = field(default_factory=list)

    # -- derived views ------------------------------------------------------

    @property
    def payload_ids(self) -> list[int]:
        return [int(tok) for tok in self.fmt if tok.isdigit()]

    @property
    def rtpmap(self) -> dict[int, RtpmapLine]:
        return {ln.pt: ln for ln in self.body if isinstance(ln, RtpmapLine)}

    @property
    def fmtp(self) -> dict[int, dict[str, Optional[str]]]:
        return {ln.pt: ln.params for ln in self.body if isinstance(ln, FmtpLine)}

    @property
    def rtcp_fb(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for ln in self.body:
            if isinstance(ln, RtcpFbLine):
                out.setdefault(ln.pt, []).append(ln.token)
        return out

    @property
    def direction(self) -> Optional[str]:
        for ln in self.body:
            if isinstance(ln, DirectionLine):
                return ln.value
        return None

    @property
    def bandwidth_as_kbps(self) -> Optional[int]:
        for ln in self.body:
            if isinstance(ln, BandwidthLine):
                return ln.kbps
        return None

    @property
    def candidates(self) -> list[IceCandidate]:
        return [ln.candidate for ln in self.body if isinstance(ln, CandidateLine)]

    @property
    def other_lines(self) -> list[str]:
        return [ln.text for ln in self.body if isinstance(ln, RawLine)]

    def codec_name(self, pt: int) -> Optional[str]:
        entry = self.rtpmap.get(pt)
        return entry.codec if entry else None

    def render_m_line(self) -> str:
        port = str(self.port) if self.port_count is None else f"{self.port}/{self.port_count}"
        return f"m={self.kind} {port} {self.protocol} {' '.join(self.fmt)}"


@dataclass
class SessionDescription:
    sdp_type: str                          # offer | answer
    session_lines: list[RawLine] = field(default_factory=list)
    media_sections: list[MediaSection] = field(default_factory=list)

    def clone(self) -> "SessionDescription":
        return copy.deepcopy(self)

    def sections_of_kind(self, kind: str) -> list[MediaSection]:
        return [s for s in self.media_sections if s.kind == kind]

    def to_doc(self) -> dict:
        return {"type": self.sdp_type, "sdp": serialize_sdp(self)}

    @classmethod
    def from_doc(cls, doc: dict) -> "SessionDescription":
        return parse_sdp(doc["sdp"], sdp_type=doc.get("type", "offer"))


# --------------------------------------------------------------------------
# Parse / serialize
# --------------------------------------------------------------------------

_M_LINE_RE = re.compile(r"^m=(\S+) (\d+)(?:/(\d+))? (\S+)((?: \S+)+)$")
_RTPMAP_RE = re.compile(r"^a=rtpmap:(\d+) ([^/]+)/(\d+)(?:/(\d+))?$")
_FMTP_RE = re.compile(r"^a=fmtp:(\d+) (.+)$")
_RTCP_FB_RE = re.compile(r"^a=rtcp-fb:(\d+) (.+)$")
_BANDWIDTH_AS_RE = re.compile(r"^b=AS:(\d+)$")


def _parse_fmtp_params(text: str) -> dict[str, Optional[str]]:
    params: dict[str, Optional[str]] = {}
    for token in text.split(";"):
        token = token.strip()
        if not token:
            continue
        if "=" in token:
            key, value = token.split("=", 1)
            params[key] = value
        else:
            params[token] = None
    return params


def _parse_section_line(line: str, section: MediaSection) -> SectionLine:
    known_pts = set(section.payload_ids)

    m = _RTPMAP_RE.match(line)
    if m:
        pt = int(m.group(1))
        if pt in known_pts:
            channels = int(m.group(4)) if m.group(4) else None
            return RtpmapLine(pt, m.group(2), int(m.group(3)), channels)
        return RawLine(line)  # orphan rtpmap: keep verbatim, out of the maps

    m = _FMTP_RE.match(line)
    if m:
        pt = int(m.group(1))
        if pt in known_pts:
            return FmtpLine(pt, _parse_fmtp_params(m.group(2)))
        return RawLine(line)

    m = _RTCP_FB_RE.match(line)
    if m:
        pt = int(m.group(1))
        if pt in known_pts:
            return RtcpFbLine(pt, m.group(2))
        return RawLine(line)

    if line.startswith("a=") and line[2:] in DIRECTIONS:
        return DirectionLine(line[2:])

    m = _BANDWIDTH_AS_RE.match(line)
    if m and section.bandwidth_as_kbps is None:
        return BandwidthLine(int(m.group(1)))

    if line.startswith("a=candidate:"):
        try:
            return CandidateLine(parse_candidate(line))
        except MalformedCandidate:
            return RawLine(line)

    return RawLine(line)


def parse_sdp(text: str, sdp_type: str = "offer") -> SessionDescription:
    """Parse SDP text (CR LF or LF framing) into the structured model."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]

    sd = SessionDescription(sdp_type=sdp_type)
    section: Optional[MediaSection] = None
    for line_no, line in enumerate(lines, start=1):
        if line.startswith("m="):
            m = _M_LINE_RE.match(line)
            if not m:
                raise MalformedLine(line_no, line, "bad m= line")
            kind, port, port_count, protocol, fmt_tail = m.groups()
            section = MediaSection(kind=kind, port=int(port), protocol=protocol,
                                   fmt=fmt_tail.split(),
                                   port_count=int(port_count) if port_count else None)
            sd.media_sections.append(section)
        elif section is None:
            sd.session_lines.append(RawLine(line))
        else:
            section.body.append(_parse_section_line(line, section))

    session_prefixes = {ln.text[:2] for ln in sd.session_lines}
    if "v=" not in session_prefixes or "o=" not in session_prefixes:
        raise MissingMandatory("SDP must carry v= and o= lines before any m= section")
    return sd


def serialize_sdp(sd: SessionDescription) -> str:
    """Canonical text: CR LF endings, preserved lines re-emitted in place."""
    lines: list[str] = [ln.text for ln in sd.session_lines]
    for section in sd.media_sections:
        lines.append(section.render_m_line())
        lines.extend(ln.render() for ln in section.body)
    return "\r\n".join(lines) + "\r\n"


# --------------------------------------------------------------------------
# Rewrites. All pure: the input description is never mutated.
# --------------------------------------------------------------------------

def _codec_matcher(codec_name: str) -> list[str]:
    """Ranked list of lowercase codec names the request matches."""
    wanted = codec_name.lower()
    if wanted in _G711_ALIASES:
        return list(_G711_FAMILY)
    return [wanted]


def _matching_pts(section: MediaSection, codec_name: str) -> list[int]:
    """Payload ids whose rtpmap codec matches, in rank-then-appearance order."""
    rtpmap = section.rtpmap
    out: list[int] = []
    for name in _codec_matcher(codec_name):
        for pt in section.payload_ids:
            entry = rtpmap.get(pt)
            if entry and entry.codec.lower() == name and pt not in out:
                out.append(pt)
    return out


def prefer_codec(sd: SessionDescription, kind: str, codec_name: str) -> SessionDescription:
    """Move payload ids for ``codec_name`` to the front of each ``kind``
    section's m= list (offer/answer preference order), keeping the relative
    order of everything else. Associated RTX/FEC ids do not move with the
    codec: only ids whose own rtpmap name matches are promoted."""
    if kind not in ("audio", "video"):
        raise InvalidValue(f"kind must be audio or video, got {kind!r}")
    out = sd.clone()
    touched = False
    for section in out.sections_of_kind(kind):
        preferred = _matching_pts(section, codec_name)
        if not preferred:
            continue
        touched = True
        front = [str(pt) for pt in preferred]
        rest = [tok for tok in section.fmt if tok not in front]
        section.fmt = front + rest
    if not touched:
        log.warning("prefer_codec: no %s payload for %r; description unchanged",
                    kind, codec_name)
    return out


def set_media_policy(sd: SessionDescription, kind: str, policy: str) -> SessionDescription:
    """``disable`` rejects the section (port 0, RFC 3264 convention);
    a direction value replaces or adds the section direction attribute."""
    if policy != "disable" and policy not in DIRECTIONS:
        raise InvalidValue(f"policy must be 'disable' or one of {DIRECTIONS}, got {policy!r}")
    out = sd.clone()
    sections = out.sections_of_kind(kind)
    if not sections:
        log.warning("set_media_policy: no %s section; description unchanged", kind)
        return out
    for section in sections:
        if policy == "disable":
            section.port = 0
        else:
            for ln in section.body:
                if isinstance(ln, DirectionLine):
                    ln.value = policy
                    break
            else:
                section.body.append(DirectionLine(policy))
    return out


def _bandwidth_insert_index(section: MediaSection) -> int:
    """Standard field order: b= goes right after the connection line, or in
    front of the attributes when the section has no c= line."""
    last_c = None
    first_attr = None
    for i, ln in enumerate(section.body):
        if isinstance(ln, RawLine):
            if ln.text.startswith("c="):
                last_c = i
            elif first_attr is None and ln.text.startswith("a="):
                first_attr = i
        elif first_attr is None:
            # every structured line other than b=AS is an a= attribute
            first_attr = i
    if last_c is not None:
        return last_c + 1
    if first_attr is not None:
        return first_attr
    return len(section.body)


def set_receiver_bandwidth(sd: SessionDescription, kind: str, kbps: int) -> SessionDescription:
    """Set the section-level b=AS receive bandwidth cap, overwriting any
    existing one (at most one per section)."""
    if not isinstance(kbps, int) or kbps <= 0:
        raise InvalidValue(f"bandwidth kbps must be a positive integer, got {kbps!r}")
    out = sd.clone()
    sections = out.sections_of_kind(kind)
    if not sections:
        log.warning("set_receiver_bandwidth: no %s section; description unchanged", kind)
    for section in sections:
        for ln in section.body:
            if isinstance(ln, BandwidthLine):
                ln.kbps = kbps
                break
        else:
            section.body.insert(_bandwidth_insert_index(section), BandwidthLine(kbps))
    return out


def set_fmtp_param(sd: SessionDescription, codec_name: str, key: str, value) -> SessionDescription:
    """Set ``key=value`` in the fmtp parameters of every payload whose codec
    matches ``codec_name``, creating the fmtp line (after the codec's rtpmap
    line) when absent."""
    out = sd.clone()
    touched = False
    for section in out.media_sections:
        for pt in _matching_pts(section, codec_name):
            touched = True
            for ln in section.body:
                if isinstance(ln, FmtpLine) and ln.pt == pt:
                    ln.params[key] = str(value)
                    break
            else:
                new_line = FmtpLine(pt, {key: str(value)})
                for i, ln in enumerate(section.body):
                    if isinstance(ln, RtpmapLine) and ln.pt == pt:
                        section.body.insert(i + 1, new_line)
                        break
                else:
                    section.body.append(new_line)
    if not touched:
        log.warning("set_fmtp_param: codec %r not present; description unchanged", codec_name)
    return out


def modify_feedback(sd: SessionDescription, action: str) -> SessionDescription:
    """RTCP feedback / FEC surgery.

    remove_nack deletes every rtcp-fb token whose first word is ``nack``;
    remove_fec drops the red/ulpfec/flexfec-03 payloads and all their lines;
    require_fec only verifies FEC is present (this layer cannot conjure
    codecs the endpoint does not implement) and warns when it is not.
    """
    if action not in ("remove_nack", "remove_fec", "require_fec"):
        raise InvalidValue(f"unknown feedback action {action!r}")
    out = sd.clone()

    if action == "remove_nack":
        for section in out.media_sections:
            section.body = [ln for ln in section.body
                            if not (isinstance(ln, RtcpFbLine)
                                    and ln.token.split()[0] == "nack")]
        return out

    if action == "require_fec":
        present = any(section.codec_name(pt) and section.codec_name(pt).lower() in FEC_CODECS
                      for section in out.media_sections for pt in section.payload_ids)
        if not present:
            log.warning("require_fec: no FEC codec in description; cannot add one at the signaling level")
        return out

    for section in out.media_sections:
        fec_pts = {pt for pt in section.payload_ids
                   if (section.codec_name(pt) or "").lower() in FEC_CODECS}
        if not fec_pts:
            continue
        section.fmt = [tok for tok in section.fmt
                       if not (tok.isdigit() and int(tok) in fec_pts)]
        section.body = [ln for ln in section.body
                        if not (isinstance(ln, (RtpmapLine, FmtpLine, RtcpFbLine))
                                and ln.pt in fec_pts)]
    return out
