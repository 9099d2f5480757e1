"""Stats ingestion, derived quality metrics, MOS scoring and series export.

Reports arrive on a polling contract (one snapshot per interval). Metrics are
deltas between consecutive snapshots; counter regressions mark a stream
restart and reset the baseline instead of producing negative rates.

The R-factor/MOS mapping is a simplified transmission-rating model: a linear
delay impairment with a knee at 177.3 ms, a logarithmic loss impairment, and
the standard cubic R-to-MOS curve clamped into [1, 4.5]. The constants are
engine-defined (documented in the catalog), tunable per call.
"""

from __future__ import annotations

import json
import math
import struct
import threading
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import InvalidInput, SinkUnreachable, UnknownMetric, UnknownSession

COUNTER_FIELDS = ("bytes_sent", "bytes_received", "packets_sent",
                  "packets_received", "packets_lost")

METRIC_UNITS = {
    "send_bitrate_bps": "bps",
    "recv_bitrate_bps": "bps",
    "packet_loss_rate": "fraction",
    "jitter_ms": "ms",
    "rtt_ms": "ms",
    "available_bitrate_bps": "bps",
    "r_factor": "score",
    "mos": "score",
}


@dataclass
class StatsEntry:
    id: str
    entry_type: str            # inbound-rtp | outbound-rtp | candidate-pair | ...
    timestamp_ms: float
    fields: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {"id": self.id, "type": self.entry_type,
                "timestamp_ms": self.timestamp_ms, "fields": dict(self.fields)}

    @classmethod
    def from_doc(cls, doc: dict) -> "StatsEntry":
        return cls(doc["id"], doc["type"], doc["timestamp_ms"], dict(doc.get("fields", {})))


@dataclass
class StatsReport:
    session_id: str
    taken_at_ms: float
    entries: dict[str, StatsEntry] = field(default_factory=dict)

    def add(self, entry: StatsEntry) -> None:
        self.entries[entry.id] = entry

    def to_doc(self) -> dict:
        return {"session_id": self.session_id, "taken_at_ms": self.taken_at_ms,
                "entries": [e.to_doc() for e in self.entries.values()]}

    @classmethod
    def from_doc(cls, doc: dict) -> "StatsReport":
        report = cls(doc["session_id"], doc["taken_at_ms"])
        for entry_doc in doc.get("entries", []):
            report.add(StatsEntry.from_doc(entry_doc))
        return report


@dataclass
class DerivedMetrics:
    send_bitrate_bps: Optional[float] = None
    recv_bitrate_bps: Optional[float] = None
    packet_loss_rate: Optional[float] = None
    jitter_ms: Optional[float] = None
    rtt_ms: Optional[float] = None
    available_bitrate_bps: Optional[float] = None

    def to_doc(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class QualityScore:
    r_factor: float
    mos: float


@dataclass
class MetricSeries:
    name: str
    unit: str
    points: list[tuple[float, float]] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {"name": self.name, "unit": self.unit,
                "points": [[t, v] for t, v in self.points]}


# --------------------------------------------------------------------------
# Quality model
# --------------------------------------------------------------------------

def compute_mos(loss: float, rtt_ms: float, jitter_ms: float,
                *, jitter_weight: float = 2.0) -> QualityScore:
    """R-factor and MOS from loss fraction, round-trip time and jitter.

    effective one-way delay d = rtt/2 + jitter_weight*jitter + 10
    Id = 0.024*d + 0.11*(d - 177.3) for d above the knee
    Ie = 30*ln(1 + 15*loss)
    R  = clamp(93.2 - Id - Ie, 0, 100)
    MOS: 1 at R<=0, 4.5 at R>=100, else the cubic R curve clamped to [1, 4.5]
    (the raw cubic dips slightly under 1 for small positive R).
    """
    if not (0.0 <= loss <= 1.0) or not math.isfinite(loss):
        raise InvalidInput(f"loss must be in [0, 1], got {loss!r}")
    if rtt_ms < 0 or jitter_ms < 0 or not math.isfinite(rtt_ms) or not math.isfinite(jitter_ms):
        raise InvalidInput(f"delays must be finite and non-negative, got rtt={rtt_ms!r} jitter={jitter_ms!r}")

    d = rtt_ms / 2.0 + jitter_weight * jitter_ms + 10.0
    delay_impairment = 0.024 * d + (0.11 * (d - 177.3) if d > 177.3 else 0.0)
    loss_impairment = 30.0 * math.log(1.0 + 15.0 * loss)
    r = min(100.0, max(0.0, 93.2 - delay_impairment - loss_impairment))

    if r <= 0.0:
        mos = 1.0
    elif r >= 100.0:
        mos = 4.5
    else:
        mos = 1.0 + 0.035 * r + r * (r - 60.0) * (100.0 - r) * 7e-6
        mos = min(4.5, max(1.0, mos))
    return QualityScore(r_factor=r, mos=mos)


def detect_quality_gap(desired: dict, actual: dict) -> dict:
    """Degraded when the achieved height or frame rate falls below half of
    what was asked for."""
    degraded = False
    if "height" in desired and "height" in actual:
        degraded = degraded or actual["height"] < desired["height"] / 2.0
    if "frame_rate" in desired and "frame_rate" in actual:
        degraded = degraded or actual["frame_rate"] < desired["frame_rate"] / 2.0
    return {"degraded": degraded, "desired": dict(desired), "actual": dict(actual)}


def actual_video_params(report: StatsReport) -> Optional[dict]:
    for entry in report.entries.values():
        if "frame_height" in entry.fields:
            out = {"height": entry.fields["frame_height"]}
            if "frame_width" in entry.fields:
                out["width"] = entry.fields["frame_width"]
            if "frames_per_second" in entry.fields:
                out["frame_rate"] = entry.fields["frames_per_second"]
            return out
    return None


# --------------------------------------------------------------------------
# Delta computation
# --------------------------------------------------------------------------

def _ms_from_seconds(value: float) -> float:
    # sub-microsecond residue from the s<->ms float conversion is noise
    return round(value * 1000.0, 6)


def derive_metrics(prev: StatsReport, curr: StatsReport) -> DerivedMetrics:
    """Window metrics between two consecutive reports.

    Entries present only in ``curr`` have no baseline and are skipped (their
    metric is omitted, the rest still computed); regressed counters are
    treated the same way, as a stream restart.
    """
    dt_s = (curr.taken_at_ms - prev.taken_at_ms) / 1000.0
    if dt_s <= 0:
        raise InvalidInput("curr report must be later than prev")

    d_sent = d_received = None
    d_pkts_recv = d_pkts_lost = None
    jitter_ms = rtt_ms = available = None

    for entry_id, entry in curr.entries.items():
        base = prev.entries.get(entry_id)
        if entry.entry_type == "candidate-pair":
            if "current_rtt_s" in entry.fields:
                rtt_ms = _ms_from_seconds(entry.fields["current_rtt_s"])
            if "available_outgoing_bitrate" in entry.fields:
                available = float(entry.fields["available_outgoing_bitrate"])
            continue
        if base is None or _regressed(base, entry):
            continue
        if entry.entry_type == "outbound-rtp" and "bytes_sent" in entry.fields:
            delta = entry.fields["bytes_sent"] - base.fields.get("bytes_sent", 0)
            d_sent = (d_sent or 0.0) + max(0.0, delta)
        if entry.entry_type == "inbound-rtp":
            if "bytes_received" in entry.fields:
                delta = entry.fields["bytes_received"] - base.fields.get("bytes_received", 0)
                d_received = (d_received or 0.0) + max(0.0, delta)
            if "packets_received" in entry.fields:
                delta = entry.fields["packets_received"] - base.fields.get("packets_received", 0)
                d_pkts_recv = (d_pkts_recv or 0.0) + max(0.0, delta)
            if "packets_lost" in entry.fields:
                delta = entry.fields["packets_lost"] - base.fields.get("packets_lost", 0)
                d_pkts_lost = (d_pkts_lost or 0.0) + max(0.0, delta)
            if "jitter_s" in entry.fields:
                jitter_ms = _ms_from_seconds(entry.fields["jitter_s"])

    metrics = DerivedMetrics(jitter_ms=jitter_ms, rtt_ms=rtt_ms,
                             available_bitrate_bps=available)
    if d_sent is not None:
        metrics.send_bitrate_bps = d_sent * 8.0 / dt_s
    if d_received is not None:
        metrics.recv_bitrate_bps = d_received * 8.0 / dt_s
    if d_pkts_recv is not None or d_pkts_lost is not None:
        lost = d_pkts_lost or 0.0
        received = d_pkts_recv or 0.0
        metrics.packet_loss_rate = lost / (lost + received) if lost + received > 0 else 0.0
    return metrics


def _regressed(base: StatsEntry, entry: StatsEntry) -> bool:
    for name in COUNTER_FIELDS:
        if name in entry.fields and name in base.fields \
                and entry.fields[name] < base.fields[name]:
            return True
    return False


# --------------------------------------------------------------------------
# Engine: per-session store, series, compression and forwarding
# --------------------------------------------------------------------------

@dataclass
class IngestResult:
    accepted: bool
    reason: Optional[str] = None
    metrics: Optional[DerivedMetrics] = None
    restarted_ids: list[str] = field(default_factory=list)


class _SessionStats:
    def __init__(self, session_id: str):
        self.session_id = session_id
        self.report_count = 0
        self.last_report: Optional[StatsReport] = None
        self.series: dict[str, MetricSeries] = {
            name: MetricSeries(name, unit) for name, unit in METRIC_UNITS.items()}


def default_post(url: str, blob: bytes) -> None:
    import httpx
    response = httpx.post(url, content=blob,
                          headers={"content-type": "application/octet-stream"},
                          timeout=5.0)
    response.raise_for_status()


class StatsEngine:
    """Holds per-session report history and derived metric series."""

    def __init__(self, sink: Optional[str] = None,
                 post_fn: Callable[[str, bytes], None] = default_post,
                 retry_buffer: int = 32):
        self._lock = threading.RLock()
        self._sessions: dict[str, _SessionStats] = {}
        self.sink = sink
        self._post = post_fn
        self._pending: deque = deque(maxlen=retry_buffer)

    # -- ingestion ---------------------------------------------------------

    def ingest_report(self, report: StatsReport) -> IngestResult:
        with self._lock:
            session = self._sessions.get(report.session_id)
            if session is None:
                session = _SessionStats(report.session_id)
                self._sessions[report.session_id] = session

            prev = session.last_report
            if prev is not None and report.taken_at_ms <= prev.taken_at_ms:
                return IngestResult(False, reason="DuplicateTimestamp")

            restarted = []
            metrics = None
            if prev is not None:
                restarted = [eid for eid, entry in report.entries.items()
                             if eid in prev.entries and _regressed(prev.entries[eid], entry)]
                metrics = derive_metrics(prev, report)
                self._append_points(session, report.taken_at_ms, metrics)

            session.last_report = report
            session.report_count += 1
            return IngestResult(True, metrics=metrics, restarted_ids=restarted)

    def _append_points(self, session: _SessionStats, t_ms: float,
                       metrics: DerivedMetrics) -> None:
        for name in ("send_bitrate_bps", "recv_bitrate_bps", "packet_loss_rate",
                     "jitter_ms", "rtt_ms", "available_bitrate_bps"):
            value = getattr(metrics, name)
            if value is not None:
                session.series[name].points.append((t_ms, float(value)))
        if metrics.packet_loss_rate is not None:
            score = compute_mos(metrics.packet_loss_rate,
                                metrics.rtt_ms or 0.0, metrics.jitter_ms or 0.0)
            session.series["r_factor"].points.append((t_ms, score.r_factor))
            session.series["mos"].points.append((t_ms, score.mos))

    # -- queries -------------------------------------------------------------

    def session_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._sessions)

    def report_count(self, session_id: str) -> int:
        with self._lock:
            session = self._sessions.get(session_id)
            return session.report_count if session else 0

    def query_series(self, session_id: str, metric_name: str,
                     t_from: Optional[float] = None,
                     t_to: Optional[float] = None) -> MetricSeries:
        if metric_name not in METRIC_UNITS:
            raise UnknownMetric(f"unknown metric {metric_name!r}; known: {sorted(METRIC_UNITS)}")
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                return MetricSeries(metric_name, METRIC_UNITS[metric_name])
            src = session.series[metric_name]
            points = [(t, v) for t, v in src.points
                      if (t_from is None or t >= t_from) and (t_to is None or t <= t_to)]
            return MetricSeries(metric_name, src.unit, points)

    # -- compression + forwarding ---------------------------------------------

    def compress(self, session_id: str) -> bytes:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise UnknownSession(session_id)
            series = {name: s for name, s in session.series.items() if s.points}
        return compress_series(session_id, series)

    def send(self, session_id: str, sink: Optional[str] = None) -> int:
        """Compress and POST the session series; on failure the payload is
        buffered (bounded) and retried on the next successful send."""
        url = sink or self.sink
        if not url:
            raise SinkUnreachable("no stats sink configured")
        blob = self.compress(session_id)
        try:
            self._post(url, blob)
        except Exception as exc:
            self._pending.append((url, blob))
            raise SinkUnreachable(f"stats sink {url} unreachable: {exc}") from exc
        written = len(blob)
        while self._pending:
            pending_url, pending_blob = self._pending.popleft()
            try:
                self._post(pending_url, pending_blob)
                written += len(pending_blob)
            except Exception:
                self._pending.appendleft((pending_url, pending_blob))
                break
        return written

    @property
    def pending_count(self) -> int:
        return len(self._pending)


# --------------------------------------------------------------------------
# Wire format: one JSON header line, then deflate(xor-delta(float64 arrays)).
# The xor delta is exactly invertible, so the round trip is lossless, and a
# constant series deltas to zeros, which deflate collapses.
# --------------------------------------------------------------------------

def _xor_delta_pack(values: list[float]) -> bytes:
    bits = struct.unpack(f"<{len(values)}Q", struct.pack(f"<{len(values)}d", *values)) \
        if values else ()
    out = []
    prev = 0
    for b in bits:
        out.append(b ^ prev)
        prev = b
    return struct.pack(f"<{len(out)}Q", *out)


def _xor_delta_unpack(blob: bytes, count: int) -> list[float]:
    deltas = struct.unpack(f"<{count}Q", blob)
    bits = []
    prev = 0
    for d in deltas:
        prev ^= d
        bits.append(prev)
    return list(struct.unpack(f"<{count}d", struct.pack(f"<{count}Q", *bits)))


def compress_series(session_id: str, series: dict[str, MetricSeries]) -> bytes:
    names = sorted(series)
    t0 = min((s.points[0][0] for s in series.values() if s.points), default=0.0)
    header = {"session_id": session_id, "t0": t0,
              "metrics": [{"name": n, "unit": series[n].unit,
                           "count": len(series[n].points)} for n in names]}
    raw = b"".join(
        _xor_delta_pack([p[0] for p in series[n].points]) +
        _xor_delta_pack([p[1] for p in series[n].points])
        for n in names)
    return json.dumps(header, sort_keys=True).encode() + b"\n" + zlib.compress(raw)


def decompress_series(blob: bytes) -> tuple[dict, dict[str, MetricSeries]]:
    header_line, _, body = blob.partition(b"\n")
    header = json.loads(header_line)
    raw = zlib.decompress(body)
    series: dict[str, MetricSeries] = {}
    offset = 0
    for meta in header["metrics"]:
        count = meta["count"]
        ts = _xor_delta_unpack(raw[offset:offset + count * 8], count)
        offset += count * 8
        vs = _xor_delta_unpack(raw[offset:offset + count * 8], count)
        offset += count * 8
        series[meta["name"]] = MetricSeries(meta["name"], meta["unit"],
                                            list(zip(ts, vs)))
    return header, series


# -- offline ingestion (CLI `stats`) -----------------------------------------

def read_ndjson_reports(text: str) -> list[StatsReport]:
    reports = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            reports.append(StatsReport.from_doc(json.loads(line)))
    return reports
