"""Fusion of the rate and burst methods into labeled streaming phases.

The two detection methods run independently per flow. Where a burst-method
phase candidate and a rate-method change event agree in kind and in timing
(within a tolerance of a few seconds), a filling or steady-state segment is
emitted with the burst method's packet-exact boundaries; everything else is
labeled ``other``. From the fused segments the profiler derives a stream
verdict (filling followed by steady state identifies a video stream), the
video encoding-rate estimate (average streaming rate over steady state), and
a play-back buffer trajectory (cumulative arrivals minus modeled play-out).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import bursts as bursts_mod
from . import rate as rate_mod
from .bursts import Burst, BurstParams, PhaseCandidate
from .rate import DECREASE, INCREASE, RateChange, RateParams, RateSeries
from .trace import FILLING, OTHER, STEADY, FlowKey, PacketRecord, Trace

_EPS = 1e-9

BYTES_PER_SEC_TO_KBPS = 8.0 / 1000.0


def to_kbps(bytes_per_sec: float) -> float:
    return bytes_per_sec * BYTES_PER_SEC_TO_KBPS


@dataclass(frozen=True)
class FusionParams:
    """Fusion and session-model knobs.

    match_tolerance: allowed gap between the two methods' change times (s).
    silence_timeout: idle gap after which a live session counts as ended (s).
    startup_delay: extra delay added to the modeled play-out start (s).
    """

    match_tolerance: float = 5.0
    silence_timeout: float = 30.0
    startup_delay: float = 0.0

    def __post_init__(self):
        if not self.match_tolerance > 0:
            raise ValueError(f"match_tolerance must be > 0, got {self.match_tolerance}")
        if not self.silence_timeout > 0:
            raise ValueError(f"silence_timeout must be > 0, got {self.silence_timeout}")
        if self.startup_delay < 0:
            raise ValueError(f"startup_delay must be >= 0, got {self.startup_delay}")


@dataclass(frozen=True)
class PhaseSegment:
    """A final labeled interval with its traffic statistics."""

    phase: str
    t_start: float
    t_end: float
    volume: int
    duration: float
    mean_rate: float

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "volume_bytes": self.volume,
            "duration_s": self.duration,
            "mean_rate_Bps": self.mean_rate,
            "mean_rate_kbps": to_kbps(self.mean_rate),
        }


@dataclass(frozen=True)
class StreamVerdict:
    """Whether the flow looks like a video stream (filling then steady state)."""

    is_video_stream: bool
    first_filling: int | None = None  # index into the segment list
    first_steady: int | None = None

    def to_dict(self) -> dict:
        return {
            "is_video_stream": self.is_video_stream,
            "first_filling_segment": self.first_filling,
            "first_steady_segment": self.first_steady,
        }


@dataclass(frozen=True)
class RateEstimate:
    """Encoding-rate estimate: per steady segment and duration-weighted session value."""

    per_steady: tuple[tuple[int, float], ...]  # (segment index, bytes/s)
    session: float | None

    def to_dict(self) -> dict:
        return {
            "session_Bps": self.session,
            "session_kbps": None if self.session is None else to_kbps(self.session),
            "per_steady_segment": [
                {"segment": i, "rate_Bps": r, "rate_kbps": to_kbps(r)}
                for i, r in self.per_steady
            ],
        }


@dataclass
class BufferTrajectory:
    """Estimated play-back buffer level over time."""

    times: np.ndarray
    levels: np.ndarray  # bytes, clamped at 0
    playout_start: float
    encode_rate_used: float

    def samples(self) -> Iterable[tuple[float, float]]:
        return zip(self.times.tolist(), self.levels.tolist())

    def to_dict(self) -> dict:
        return {
            "playout_start": self.playout_start,
            "encode_rate_used_Bps": self.encode_rate_used,
            "samples": [[t, b] for t, b in self.samples()],
        }


@dataclass
class ProfileReport:
    """Everything the profiler can say about one flow."""

    flow: FlowKey | None
    n_packets: int
    total_bytes: int
    t_start: float
    t_end: float
    segments: list[PhaseSegment]
    verdict: StreamVerdict
    rate_estimate: RateEstimate
    buffer: BufferTrajectory | None
    rate_series: RateSeries | None = field(default=None, repr=False)
    bursts: list[Burst] | None = field(default=None, repr=False)

    def to_dict(self, include_buffer_samples: bool = True) -> dict:
        flow = None
        if self.flow is not None:
            flow = {"src": self.flow.src, "dst": self.flow.dst, "dst_port": self.flow.dst_port}
        buffer = None
        if self.buffer is not None:
            buffer = self.buffer.to_dict()
            if not include_buffer_samples:
                buffer.pop("samples")
        return {
            "unit_note": "rates in bytes per second unless a field is suffixed _kbps",
            "flow": flow,
            "n_packets": self.n_packets,
            "total_bytes": self.total_bytes,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "segments": [s.to_dict() for s in self.segments],
            "verdict": self.verdict.to_dict(),
            "rate_estimate": self.rate_estimate.to_dict(),
            "buffer": buffer,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(**kwargs), indent=2, sort_keys=True)


# -- fusion -----------------------------------------------------------------


def _cumulative_bytes(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    return trace.times, np.cumsum(trace.sizes)


def _bytes_up_to(times: np.ndarray, cum: np.ndarray, t: float, side: str = "right") -> int:
    idx = int(np.searchsorted(times, t, side=side))
    return int(cum[idx - 1]) if idx > 0 else 0


def fuse(trace: Trace, rate_events: list[RateChange], candidates: list[PhaseCandidate],
         params: FusionParams) -> list[PhaseSegment]:
    """Cross-check the two methods and tile the flow span with segments.

    A filling candidate is confirmed by a rate increase, a steady candidate by
    a rate decrease, when the event time lies within ``match_tolerance`` of the
    candidate start. Confirmed candidates become segments with the burst
    method's boundaries (packet-exact, unlike the filter-lagged rate method);
    uncovered time becomes ``other``. Segment volumes partition the flow's
    payload exactly; candidate boundaries fall on their own burst's packets,
    so a packet sitting exactly on a boundary is attributed to the candidate
    segment, not the surrounding ``other`` gap.
    """
    if len(trace) == 0:
        return []
    confirmed: list[PhaseCandidate] = []
    for cand in candidates:
        wanted = INCREASE if cand.kind == FILLING else DECREASE
        if any(ev.direction == wanted and abs(ev.time - cand.t_start) <= params.match_tolerance
               for ev in rate_events):
            confirmed.append(cand)
    confirmed.sort(key=lambda c: c.t_start)

    t0, t1 = trace.t_start, trace.t_end
    pieces: list[tuple[str, float, float]] = []
    cursor = t0
    for cand in confirmed:
        if cand.t_start - cursor > _EPS:
            pieces.append((OTHER, cursor, cand.t_start))
        pieces.append((cand.kind, cand.t_start, cand.t_end))
        cursor = cand.t_end
    if t1 - cursor > _EPS:
        pieces.append((OTHER, cursor, t1))

    times, cum = _cumulative_bytes(trace)
    segments: list[PhaseSegment] = []
    prev_bytes = 0
    for k, (phase, a, b) in enumerate(pieces):
        final = k == len(pieces) - 1
        # an `other` piece ends where the next candidate's first packet sits
        side = "left" if (phase == OTHER and not final) else "right"
        upto = _bytes_up_to(times, cum, b, side=side)
        volume = upto - prev_bytes
        prev_bytes = upto
        duration = b - a
        segments.append(PhaseSegment(phase=phase, t_start=a, t_end=b, volume=volume,
                                     duration=duration, mean_rate=volume / duration))
    return segments


def detect_stream(segments: list[PhaseSegment]) -> StreamVerdict:
    """A video stream shows a filling segment followed, not necessarily
    adjacently, by a steady-state segment."""
    first_filling = next((i for i, s in enumerate(segments) if s.phase == FILLING), None)
    first_steady = None
    if first_filling is not None:
        first_steady = next((i for i, s in enumerate(segments)
                             if i > first_filling and s.phase == STEADY), None)
    return StreamVerdict(is_video_stream=first_steady is not None,
                         first_filling=first_filling, first_steady=first_steady)


def estimate_rate(segments: list[PhaseSegment]) -> RateEstimate:
    """Average streaming rate over identified steady-state segments.

    In steady state the client paces its requests to match the encoding rate,
    so the per-segment mean arrival rate estimates the encoding rate. Segment
    volumes already partition the flow's payload exactly, so the estimate is
    ``volume / duration`` per steady segment and the duration-weighted mean
    across them for the session. With no steady segment the estimate is
    absent rather than guessed.
    """
    per: list[tuple[int, float]] = []
    total_bytes = 0.0
    total_dur = 0.0
    for i, seg in enumerate(segments):
        if seg.phase != STEADY:
            continue
        per.append((i, seg.volume / seg.duration))
        total_bytes += seg.volume
        total_dur += seg.duration
    session = (total_bytes / total_dur) if total_dur > 0 else None
    return RateEstimate(per_steady=tuple(per), session=session)


def estimate_buffer(trace: Trace, encode_rate: float, playout_start: float,
                    sample_dt: float, t_stop: float | None = None) -> BufferTrajectory:
    """Play-back buffer level: cumulative arrivals minus modeled play-out.

    Play-out is linear at ``encode_rate`` from ``playout_start`` onward; the
    level is clamped at zero (stalls absorb the deficit). Sampled on the rate
    bin grid from the flow's first packet.
    """
    if encode_rate <= 0:
        raise ValueError(f"encode_rate must be > 0, got {encode_rate}")
    if len(trace) == 0:
        return BufferTrajectory(np.zeros(0), np.zeros(0), playout_start, encode_rate)
    t0 = trace.t_start
    t_last = trace.t_end if t_stop is None else t_stop
    n = int(np.floor((t_last - t0) / sample_dt)) + 1
    ts = t0 + sample_dt * np.arange(n + 1)
    times, cum = _cumulative_bytes(trace)
    idx = np.searchsorted(times, ts, side="right")
    cum0 = np.concatenate([[0], cum])
    arrived = cum0[idx].astype(np.float64)
    played = encode_rate * np.clip(ts - playout_start, 0.0, None)
    levels = np.clip(arrived - played, 0.0, None)
    return BufferTrajectory(times=ts, levels=levels, playout_start=playout_start,
                            encode_rate_used=encode_rate)


def profile(trace: Trace, rate_params: RateParams | None = None,
            burst_params: BurstParams | None = None,
            fusion_params: FusionParams | None = None,
            include_debug: bool = False) -> ProfileReport:
    """Run both methods on one flow and fuse them into a profile report.

    Deterministic: identical trace and parameters give an identical report.
    Degenerate traces (empty, single packet) yield empty or absent fields,
    never an error.
    """
    rp = rate_params or RateParams()
    bp = burst_params or BurstParams()
    fp = fusion_params or FusionParams()

    series = rate_mod.analyze(trace, rp, tail=bp.h_t) if len(trace) else None
    classified, candidates = bursts_mod.detect(trace, bp)
    events = series.events if series is not None else []
    segments = fuse(trace, events, candidates, fp)
    verdict = detect_stream(segments)
    rate_estimate = estimate_rate(segments)

    buffer = None
    if rate_estimate.session is not None and len(trace):
        playout_start = trace.t_start + rp.delta_t + fp.startup_delay
        buffer = estimate_buffer(trace, rate_estimate.session, playout_start, rp.delta_t)

    return ProfileReport(
        flow=trace.flows[0] if trace.flows else None,
        n_packets=len(trace),
        total_bytes=trace.total_bytes,
        t_start=trace.t_start,
        t_end=trace.t_end,
        segments=segments,
        verdict=verdict,
        rate_estimate=rate_estimate,
        buffer=buffer,
        rate_series=series if include_debug else None,
        bursts=classified if include_debug else None,
    )


class StreamProfiler:
    """Incremental per-flow profiler: feed packets, query the current profile.

    Packets must arrive in non-decreasing time order. Queries recompute from
    the accumulated packets and never mutate state, so interleaving feeds and
    queries is safe.
    """

    def __init__(self, rate_params: RateParams | None = None,
                 burst_params: BurstParams | None = None,
                 fusion_params: FusionParams | None = None,
                 flow: FlowKey | None = None):
        self.rate_params = rate_params or RateParams()
        self.burst_params = burst_params or BurstParams()
        self.fusion_params = fusion_params or FusionParams()
        self.flow = flow or FlowKey("0.0.0.0", "0.0.0.0")
        self._times: list[float] = []
        self._sizes: list[int] = []

    def feed(self, t_arrival: float, payload_size: int) -> None:
        if self._times and t_arrival < self._times[-1]:
            raise ValueError(f"packet at t={t_arrival} arrived out of order "
                             f"(last was {self._times[-1]})")
        if payload_size < 1:
            raise ValueError(f"payload_size must be >= 1, got {payload_size}")
        self._times.append(float(t_arrival))
        self._sizes.append(int(payload_size))

    def feed_record(self, record: PacketRecord) -> None:
        self.feed(record.t_arrival, record.payload_size)

    @property
    def n_packets(self) -> int:
        return len(self._times)

    def trace(self) -> Trace:
        return Trace.single_flow(self._times, self._sizes, self.flow)

    def segments(self) -> list[PhaseSegment]:
        return self.report().segments

    def report(self, include_debug: bool = False) -> ProfileReport:
        return profile(self.trace(), self.rate_params, self.burst_params,
                       self.fusion_params, include_debug=include_debug)

    def session_ended(self, now: float) -> bool:
        """True once the flow has been silent for the configured timeout."""
        if not self._times:
            return False
        return now - self._times[-1] >= self.fusion_params.silence_timeout
