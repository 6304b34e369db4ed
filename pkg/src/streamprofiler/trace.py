"""Packet trace representation, CSV parsing, and per-flow demultiplexing.

A trace is a time-ordered collection of downlink packet observations:
arrival time, transport payload size, and flow addressing. Storage is
columnar (numpy arrays) so that rate binning and burst segmentation stay
cheap on traces with hundreds of thousands of packets; ``PacketRecord``
is the scalar row view used at parse boundaries and in tests.

Canonical trace format is a flat CSV with header ``t,size,src,dst,dst_port``
(decimal seconds, integer payload bytes, addresses, optional port).
Ground-truth phase labels use a second CSV with header
``t_start,t_end,phase``.
"""

from __future__ import annotations

import csv
import io
import ipaddress
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

FILLING = "filling"
STEADY = "steady_state"
OTHER = "other"
PHASES = (FILLING, STEADY, OTHER)

TRACE_HEADER = ("t", "size", "src", "dst", "dst_port")
LABEL_HEADER = ("t_start", "t_end", "phase")


class TraceParseError(ValueError):
    """Malformed trace or label CSV. Carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True, slots=True)
class FlowKey:
    """Flow addressing: source, destination, and optional destination port.

    Equality is componentwise; an absent port only equals an absent port,
    so address-level and address+port flow scoping can coexist.
    """

    src: str
    dst: str
    dst_port: int | None = None

    def without_port(self) -> "FlowKey":
        return FlowKey(self.src, self.dst, None)

    def __str__(self) -> str:
        port = "" if self.dst_port is None else f":{self.dst_port}"
        return f"{self.src}->{self.dst}{port}"


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """One observed downlink packet."""

    t_arrival: float
    payload_size: int
    flow: FlowKey

    def __post_init__(self):
        if not (np.isfinite(self.t_arrival) and self.t_arrival >= 0.0):
            raise ValueError(f"t_arrival must be finite and >= 0, got {self.t_arrival!r}")
        if self.payload_size < 1:
            raise ValueError(f"payload_size must be >= 1, got {self.payload_size!r}")


@dataclass(frozen=True, slots=True)
class PhaseSpan:
    """A labeled time interval of a streaming session."""

    t_start: float
    t_end: float
    phase: str

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if not self.t_end > self.t_start:
            raise ValueError(f"t_end must exceed t_start, got [{self.t_start}, {self.t_end}]")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(eq=False)
class Trace:
    """Columnar packet trace: parallel arrays plus a flow table.

    ``flow_ids[i]`` indexes into ``flows`` for packet ``i``. ``meta`` holds
    free-form annotations (scenario name, label file reference).
    """

    times: np.ndarray
    sizes: np.ndarray
    flow_ids: np.ndarray
    flows: list[FlowKey]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        self.flow_ids = np.asarray(self.flow_ids, dtype=np.int32)
        if not (self.times.shape == self.sizes.shape == self.flow_ids.shape):
            raise ValueError("times, sizes and flow_ids must have equal length")

    # -- construction -----------------------------------------------------

    @classmethod
    def empty(cls, meta: dict | None = None) -> "Trace":
        return cls(np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int32),
                   [], meta or {})

    @classmethod
    def from_records(cls, records: Iterable[PacketRecord], meta: dict | None = None) -> "Trace":
        times: list[float] = []
        sizes: list[int] = []
        ids: list[int] = []
        flows: list[FlowKey] = []
        index: dict[FlowKey, int] = {}
        for rec in records:
            fid = index.get(rec.flow)
            if fid is None:
                fid = len(flows)
                index[rec.flow] = fid
                flows.append(rec.flow)
            times.append(rec.t_arrival)
            sizes.append(rec.payload_size)
            ids.append(fid)
        return cls(np.asarray(times, dtype=np.float64),
                   np.asarray(sizes, dtype=np.int64),
                   np.asarray(ids, dtype=np.int32), flows, meta or {})

    @classmethod
    def single_flow(cls, times, sizes, flow: FlowKey, meta: dict | None = None) -> "Trace":
        times = np.asarray(times, dtype=np.float64)
        return cls(times, np.asarray(sizes, dtype=np.int64),
                   np.zeros(len(times), dtype=np.int32), [flow], meta or {})

    # -- basic views ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.sizes, other.sizes)
                and np.array_equal(self.flow_ids, other.flow_ids)
                and self.flows == other.flows
                and self.meta == other.meta)

    @property
    def t_start(self) -> float:
        return float(self.times[0]) if len(self) else 0.0

    @property
    def t_end(self) -> float:
        return float(self.times[-1]) if len(self) else 0.0

    @property
    def span(self) -> float:
        return self.t_end - self.t_start

    @property
    def total_bytes(self) -> int:
        return int(self.sizes.sum())

    @property
    def is_time_sorted(self) -> bool:
        return bool(np.all(np.diff(self.times) >= 0.0)) if len(self) > 1 else True

    def records(self) -> Iterator[PacketRecord]:
        for t, s, fid in zip(self.times, self.sizes, self.flow_ids):
            yield PacketRecord(float(t), int(s), self.flows[fid])

    def subset(self, mask: np.ndarray, flows: list[FlowKey] | None = None,
               flow_ids: np.ndarray | None = None) -> "Trace":
        ids = flow_ids if flow_ids is not None else self.flow_ids[mask]
        return Trace(self.times[mask], self.sizes[mask], ids,
                     flows if flows is not None else list(self.flows), dict(self.meta))

    def shifted(self, offset: float) -> "Trace":
        """Same trace with every arrival time moved by ``offset`` seconds."""
        return Trace(self.times + offset, self.sizes.copy(), self.flow_ids.copy(),
                     list(self.flows), dict(self.meta))


# -- operations -----------------------------------------------------------


def normalize(trace: Trace) -> Trace:
    """Stable-sort records by arrival time and re-origin so the first is at t=0.

    Ties keep input order. Idempotent: a normalized trace maps to itself
    bit-exactly.
    """
    if len(trace) == 0:
        return Trace.empty(dict(trace.meta))
    order = np.argsort(trace.times, kind="stable")
    times = trace.times[order]
    origin = times[0]
    return Trace(times - origin, trace.sizes[order], trace.flow_ids[order],
                 list(trace.flows), dict(trace.meta))


def demux(trace: Trace, merge_ports: bool = False) -> dict[FlowKey, Trace]:
    """Split a trace into per-flow sub-traces, preserving record order.

    The result is a partition: every record lands in exactly one sub-trace.
    With ``merge_ports`` set, flows differing only in destination port are
    grouped under a portless key (address-level flow scoping).
    """
    groups: dict[FlowKey, list[int]] = {}
    for fid, flow in enumerate(trace.flows):
        key = flow.without_port() if merge_ports else flow
        groups.setdefault(key, []).append(fid)

    out: dict[FlowKey, Trace] = {}
    seen: set[FlowKey] = set()
    # key order follows first appearance in the packet stream
    for fid in trace.flow_ids:
        flow = trace.flows[fid]
        key = flow.without_port() if merge_ports else flow
        if key in seen:
            continue
        seen.add(key)
        ids = groups[key]
        mask = np.isin(trace.flow_ids, ids)
        out[key] = Trace(trace.times[mask], trace.sizes[mask],
                         np.zeros(int(mask.sum()), dtype=np.int32), [key], dict(trace.meta))
    return out


# -- CSV parsing / serialization ------------------------------------------


def _as_text_lines(source) -> Iterator[str]:
    if isinstance(source, bytes):
        yield from io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        yield from io.StringIO(source)
    elif isinstance(source, io.TextIOBase):
        yield from source
    else:  # binary file-like
        yield from io.TextIOWrapper(source, encoding="utf-8")


def _check_header(row: list[str], expected: tuple[str, ...]) -> None:
    got = tuple(f.strip() for f in row)
    if got != expected:
        raise TraceParseError(1, f"expected header {','.join(expected)!r}, got {','.join(got)!r}")


def _parse_addr(text: str, line_no: int, column: str, seen: set[str]) -> str:
    if text in seen:
        return text
    try:
        ipaddress.ip_address(text)
    except ValueError:
        raise TraceParseError(line_no, f"{column} is not an IP address: {text!r}") from None
    seen.add(text)
    return text


def parse_trace(source: str | bytes | IO, format: str = "csv") -> Trace:
    """Parse a packet trace from CSV text, bytes, or a file object.

    Every well-formed row becomes one record, in input order. A header-only
    input yields an empty trace; a malformed row raises ``TraceParseError``
    with its line number.
    """
    if format != "csv":
        raise ValueError(f"unsupported trace format: {format!r}")
    reader = csv.reader(_as_text_lines(source))
    times: list[float] = []
    sizes: list[int] = []
    ids: list[int] = []
    flows: list[FlowKey] = []
    index: dict[FlowKey, int] = {}
    valid_addrs: set[str] = set()
    header_seen = False
    for line_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if not header_seen:
            _check_header(row, TRACE_HEADER)
            header_seen = True
            continue
        if len(row) != len(TRACE_HEADER):
            raise TraceParseError(line_no, f"expected {len(TRACE_HEADER)} fields, got {len(row)}")
        t_text, size_text, src, dst, port_text = (f.strip() for f in row)
        try:
            t = float(t_text)
        except ValueError:
            raise TraceParseError(line_no, f"bad timestamp {t_text!r}") from None
        if not (np.isfinite(t) and t >= 0.0):
            raise TraceParseError(line_no, f"timestamp must be finite and >= 0, got {t_text!r}")
        try:
            size = int(size_text)
        except ValueError:
            raise TraceParseError(line_no, f"bad payload size {size_text!r}") from None
        if size < 1:
            raise TraceParseError(line_no, f"payload size must be >= 1, got {size}")
        src = _parse_addr(src, line_no, "src", valid_addrs)
        dst = _parse_addr(dst, line_no, "dst", valid_addrs)
        if port_text:
            try:
                port = int(port_text)
            except ValueError:
                raise TraceParseError(line_no, f"bad dst_port {port_text!r}") from None
            if not 1 <= port <= 65535:
                raise TraceParseError(line_no, f"dst_port out of range: {port}")
        else:
            port = None
        flow = FlowKey(src, dst, port)
        fid = index.get(flow)
        if fid is None:
            fid = len(flows)
            index[flow] = fid
            flows.append(flow)
        times.append(t)
        sizes.append(size)
        ids.append(fid)
    if not header_seen:
        raise TraceParseError(1, "missing header")
    return Trace(np.asarray(times, dtype=np.float64), np.asarray(sizes, dtype=np.int64),
                 np.asarray(ids, dtype=np.int32), flows)


def serialize_trace(trace: Trace) -> str:
    """Render a trace to canonical CSV. Round-trips bit-exactly through parse."""
    out = [",".join(TRACE_HEADER)]
    for t, s, fid in zip(trace.times, trace.sizes, trace.flow_ids):
        flow = trace.flows[fid]
        port = "" if flow.dst_port is None else str(flow.dst_port)
        out.append(f"{float(t)!r},{int(s)},{flow.src},{flow.dst},{port}")
    return "\n".join(out) + "\n"


def load_trace(path: str | Path) -> Trace:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_trace(fh)


def write_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(serialize_trace(trace), encoding="utf-8", newline="\n")


def parse_labels(source: str | bytes | IO) -> list[PhaseSpan]:
    """Parse ground-truth phase labels (CSV ``t_start,t_end,phase``)."""
    reader = csv.reader(_as_text_lines(source))
    spans: list[PhaseSpan] = []
    header_seen = False
    for line_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if not header_seen:
            _check_header(row, LABEL_HEADER)
            header_seen = True
            continue
        if len(row) != 3:
            raise TraceParseError(line_no, f"expected 3 fields, got {len(row)}")
        a, b, phase = (f.strip() for f in row)
        try:
            t0, t1 = float(a), float(b)
        except ValueError:
            raise TraceParseError(line_no, f"bad interval bounds {a!r},{b!r}") from None
        try:
            spans.append(PhaseSpan(t0, t1, phase))
        except ValueError as exc:
            raise TraceParseError(line_no, str(exc)) from None
    if not header_seen:
        raise TraceParseError(1, "missing header")
    return spans


def serialize_labels(labels: Iterable[PhaseSpan]) -> str:
    out = [",".join(LABEL_HEADER)]
    for span in labels:
        out.append(f"{float(span.t_start)!r},{float(span.t_end)!r},{span.phase}")
    return "\n".join(out) + "\n"


def load_labels(path: str | Path) -> list[PhaseSpan]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_labels(fh)


def write_labels(labels: Iterable[PhaseSpan], path: str | Path) -> None:
    Path(path).write_text(serialize_labels(labels), encoding="utf-8", newline="\n")
