"""Burst segmentation and rule-based burst classification for one flow.

Packets whose inter-arrival gap stays below a threshold belong to the same
burst. Per-burst size, duration, and rate feed a static rule set: long
bursts at near-reference rate indicate buffer filling, short ones the
paced steady-state request pattern, everything else is unclassified.
A run of consecutive steady bursts of minimum length confirms a
steady-state phase candidate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .trace import FILLING, STEADY, Trace

KLASS_FILLING = 1
KLASS_STEADY = -1
KLASS_NONE = 0


@dataclass(frozen=True)
class BurstParams:
    """Burst-method thresholds.

    h_t: inter-arrival gap that separates bursts (seconds).
    h_d: duration at or above which a burst looks like buffer filling (seconds).
    h_r: fraction of the first burst's rate a burst must reach to be classified.
    h_s: minimum payload of a retained burst (bytes).
    h_n: consecutive steady bursts required to confirm a steady-state phase.
    rate_duration_floor: floor on the duration used for a burst's rate, keeps
        single-packet bursts finite; tie it to the rate-method bin width.
    """

    h_t: float = 1.5
    h_d: float = 5.0
    h_r: float = 0.3
    h_s: float = 20_000.0
    h_n: int = 3
    rate_duration_floor: float = 0.1

    def __post_init__(self):
        for name in ("h_t", "h_d", "h_r", "h_s", "rate_duration_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.h_r < 1:
            raise ValueError(f"h_r must be < 1, got {self.h_r}")
        if not (isinstance(self.h_n, int) and self.h_n >= 1):
            raise ValueError(f"h_n must be a positive integer, got {self.h_n}")


@dataclass(frozen=True)
class Burst:
    """A contiguous packet group. ``klass`` is None until classified."""

    index: int
    t_start: float
    t_end: float
    size: int
    duration: float
    rate: float
    klass: int | None = None


@dataclass(frozen=True)
class PhaseCandidate:
    """A phase interval proposed by the burst method."""

    kind: str  # FILLING or STEADY
    t_start: float
    t_end: float
    first_burst: int
    last_burst: int


def segment(trace: Trace, params: BurstParams) -> list[Burst]:
    """Split a flow into maximal bursts at inter-arrival gaps >= ``h_t``.

    Every packet belongs to exactly one burst. Burst boundaries are the first
    and last packet arrival times; the gap is measured last-packet-to-first-packet.
    """
    if len(trace.flows) > 1:
        raise ValueError("burst segmentation expects a single-flow trace; demux first")
    if not trace.is_time_sorted:
        raise ValueError("trace is not time-sorted; normalize first")
    n = len(trace)
    if n == 0:
        return []
    gaps = np.diff(trace.times)
    breaks = np.flatnonzero(gaps >= params.h_t) + 1
    starts = np.concatenate([[0], breaks]).astype(np.int64)
    ends = np.concatenate([breaks, [n]]).astype(np.int64)
    sums = np.add.reduceat(trace.sizes, starts)
    bursts = []
    for i, (s, e) in enumerate(zip(starts, ends)):
        t0 = float(trace.times[s])
        t1 = float(trace.times[e - 1])
        size = int(sums[i])
        duration = t1 - t0
        rate = size / max(duration, params.rate_duration_floor)
        bursts.append(Burst(index=i + 1, t_start=t0, t_end=t1, size=size,
                            duration=duration, rate=rate))
    return bursts


def filter_small(bursts: list[Burst], params: BurstParams) -> list[Burst]:
    """Drop bursts below ``h_s`` bytes and re-index the survivors from 1."""
    retained = [b for b in bursts if b.size >= params.h_s]
    return [replace(b, index=i + 1) for i, b in enumerate(retained)]


def classify(bursts: list[Burst], params: BurstParams) -> list[Burst]:
    """Assign each retained burst a class.

    With r1 the rate of the first retained burst: a burst at rate >= h_r * r1
    is filling (+1) when its duration reaches h_d and steady (-1) otherwise;
    bursts below the rate bar stay unclassified (0). r1 is fixed for the whole
    session, so a throttled stretch falls to class 0 on the rate criterion.
    The first burst trivially passes the rate bar and is classed by duration
    alone, which is intended: the initial filling burst is long.
    """
    if not bursts:
        return []
    r1 = bursts[0].rate
    out = []
    for b in bursts:
        if b.rate >= params.h_r * r1:
            klass = KLASS_FILLING if b.duration >= params.h_d else KLASS_STEADY
        else:
            klass = KLASS_NONE
        out.append(replace(b, klass=klass))
    return out


def confirm_steady(bursts: list[Burst], params: BurstParams) -> list[PhaseCandidate]:
    """Turn classified bursts into phase candidates.

    Adjacent filling bursts merge into one filling candidate. A steady
    candidate needs a maximal run of at least ``h_n`` consecutive steady
    bursts; shorter runs and unclassified bursts yield nothing. Candidate
    intervals run from the first burst's start to the last burst's end.
    """
    candidates: list[PhaseCandidate] = []
    i = 0
    n = len(bursts)
    while i < n:
        klass = bursts[i].klass
        if klass is None:
            raise ValueError("bursts must be classified before confirmation")
        if klass == KLASS_NONE:
            i += 1
            continue
        j = i
        while j + 1 < n and bursts[j + 1].klass == klass:
            j += 1
        run = j - i + 1
        if klass == KLASS_FILLING:
            candidates.append(PhaseCandidate(FILLING, bursts[i].t_start, bursts[j].t_end,
                                             bursts[i].index, bursts[j].index))
        elif run >= params.h_n:
            candidates.append(PhaseCandidate(STEADY, bursts[i].t_start, bursts[j].t_end,
                                             bursts[i].index, bursts[j].index))
        i = j + 1
    return candidates


def detect(trace: Trace, params: BurstParams) -> tuple[list[Burst], list[PhaseCandidate]]:
    """Full burst pipeline: segment, filter, classify, confirm."""
    classified = classify(filter_small(segment(trace, params), params), params)
    return classified, confirm_steady(classified, params)


def write_bursts_csv(bursts: list[Burst], path: str | Path) -> None:
    """Debug dump of retained bursts for plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "t_start", "t_end", "size", "duration", "rate", "klass"])
        for b in bursts:
            writer.writerow([b.index, repr(b.t_start), repr(b.t_end), b.size,
                             repr(b.duration), repr(b.rate),
                             "" if b.klass is None else b.klass])
