"""Measurement pipeline: beacon alignment, binning, all-active truncation,
sliding-window Jain fairness, collision rates and per-bin throughput.

Multiple per-machine logs are mapped onto one global time axis using the
calibration beacons each machine recorded; bins are tied to beacon counts so
their widths are immune to clock skew.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace

from .sim import Outcome, SimResult, ScenarioConfig, TxEvent


class AlignmentError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class LogEntry:
    t_us: float
    station: int
    outcome: Outcome
    retry: int
    cw_used: int
    payload_bytes: int


@dataclass(frozen=True)
class RawLog:
    source_id: str
    entries: tuple[LogEntry, ...]
    beacons: tuple[float, ...]  # local timestamps, us


@dataclass(frozen=True)
class AlignedTrace:
    entries: tuple[LogEntry, ...]  # global time, sorted
    bin_edges: tuple[float, ...]  # global time, half-open bins [e, e+1)
    dropped: int = 0


FAILURE_OUTCOMES = (Outcome.COLLISION, Outcome.CHANNEL_LOSS)


def _map_time(t: float, beacons: list[float], globals_: list[float]) -> float:
    """Piecewise-linear local->global mapping anchored at matched beacons;
    points outside the beacon span extrapolate along the edge segment."""
    k = bisect.bisect_right(beacons, t) - 1
    k = max(0, min(k, len(beacons) - 2))
    b0, b1 = beacons[k], beacons[k + 1]
    g0, g1 = globals_[k], globals_[k + 1]
    return g0 + (t - b0) * (g1 - g0) / (b1 - b0)


def align(
    logs: list[RawLog],
    beacon_interval_ms: float = 10.0,
    beacons_per_bin: int = 10,
) -> AlignedTrace:
    """Merge per-source logs onto the global beacon time axis.

    Beacon k across all sources is the same broadcast, so it maps to global
    time k * interval; entry timestamps interpolate between their
    surrounding beacons.
    """
    if not logs:
        raise AlignmentError("no logs to align")
    counts = {log.source_id: len(log.beacons) for log in logs}
    n_beacons = min(counts.values())
    if n_beacons < 2:
        raise AlignmentError("every log needs at least 2 beacons")
    offenders = [sid for sid, c in counts.items() if c - n_beacons > 1]
    if offenders:
        raise AlignmentError(
            f"beacon count mismatch > 1 for sources: {', '.join(sorted(offenders))}"
        )
    interval_us = beacon_interval_ms * 1000.0
    globals_ = [k * interval_us for k in range(n_beacons)]
    merged: list[LogEntry] = []
    dropped = 0
    for log in logs:
        beacons = list(log.beacons[:n_beacons])
        for e in log.entries:
            if not math.isfinite(e.t_us):
                dropped += 1
                continue
            merged.append(replace(e, t_us=_map_time(e.t_us, beacons, globals_)))
    merged.sort(key=lambda e: (e.t_us, e.station))
    edges = tuple(
        globals_[k] for k in range(0, n_beacons, beacons_per_bin)
    )
    return AlignedTrace(entries=tuple(merged), bin_edges=edges, dropped=dropped)


def truncate_all_active(
    trace: AlignedTrace, n_stations: int, full_size_bytes: int = 1540
) -> AlignedTrace:
    """Keep only the period when every station was provably contending:
    [latest first full-size packet, earliest last one]."""
    firsts: dict[int, float] = {}
    lasts: dict[int, float] = {}
    for e in trace.entries:
        if e.payload_bytes >= full_size_bytes:
            firsts.setdefault(e.station, e.t_us)
            lasts[e.station] = e.t_us
    missing = [i for i in range(n_stations) if i not in firsts]
    if missing:
        raise DataError(f"stations without a full-size packet: {missing}")
    start = max(firsts[i] for i in range(n_stations))
    end = min(lasts[i] for i in range(n_stations))
    if end < start:
        raise DataError("no all-active period")
    entries = tuple(e for e in trace.entries if start <= e.t_us <= end)
    # keep bins anchored on the beacon grid, starting at the first edge
    # inside the window
    edges = tuple(x for x in trace.bin_edges if start <= x <= end)
    return AlignedTrace(entries=entries, bin_edges=edges, dropped=trace.dropped)


def jain_fairness(trace: AlignedTrace, n: int, w: int) -> list[float]:
    """Jain index over a sliding window of w consecutive successes, stride 1.

    tau_j is station j's fraction of the window's successes, so
    F = 1 / (n * sum(tau_j^2)); F = 1 means equal shares, 1/n one owner.
    """
    if w < n:
        raise ValueError(f"window w={w} must be >= n={n}")
    stations = [e.station for e in trace.entries if e.outcome is Outcome.SUCCESS]
    if len(stations) < w:
        return []
    counts = [0] * n
    for s in stations[:w]:
        counts[s] += 1
    sumsq = sum(c * c for c in counts)
    out = [w * w / (n * sumsq)]
    for i in range(w, len(stations)):
        old, new = stations[i - w], stations[i]
        if old != new:
            sumsq -= counts[old] ** 2 + counts[new] ** 2
            counts[old] -= 1
            counts[new] += 1
            sumsq += counts[old] ** 2 + counts[new] ** 2
        out.append(w * w / (n * sumsq))
    return out


def _frames(trace: AlignedTrace):
    """Group per-station events into frames (attempt runs ending in a
    success or a discard)."""
    per_station: dict[int, list[LogEntry]] = {}
    for e in trace.entries:
        per_station.setdefault(e.station, []).append(e)
    frames = []
    for entries in per_station.values():
        attempts = 0
        for e in entries:
            if e.outcome is Outcome.DISCARD:
                frames.append(attempts)
                attempts = 0
            elif e.outcome is Outcome.SUCCESS:
                frames.append(attempts + 1)
                attempts = 0
            else:
                attempts += 1
    return frames


def collision_rate(trace: AlignedTrace, mode: str = "all_retries") -> float:
    """Collision rate per one of the two counting conventions.

    all_retries: failed attempts / total attempts (the default convention).
    packets_with_retry: fraction of frames that needed more than one attempt.
    """
    if not trace.entries:
        raise DataError("empty trace")
    if mode == "all_retries":
        attempts = failures = 0
        for e in trace.entries:
            if e.outcome is Outcome.DISCARD:
                continue
            attempts += 1
            if e.outcome in FAILURE_OUTCOMES:
                failures += 1
        return failures / attempts if attempts else 0.0
    if mode == "packets_with_retry":
        frames = _frames(trace)
        if not frames:
            return 0.0
        return sum(1 for a in frames if a > 1) / len(frames)
    raise ValueError(f"unknown mode: {mode!r}")


def throughput_per_bin(trace: AlignedTrace) -> tuple[list[tuple[int, float]], float]:
    """Aggregate successful bytes/s per half-open bin, plus the median."""
    edges = trace.bin_edges
    if len(edges) < 2:
        raise DataError("bins not defined")
    per_bin = [0] * (len(edges) - 1)
    for e in trace.entries:
        if e.outcome is not Outcome.SUCCESS:
            continue
        k = bisect.bisect_right(edges, e.t_us) - 1
        if 0 <= k < len(per_bin) and e.t_us < edges[k + 1]:
            per_bin[k] += e.payload_bytes
    rows = []
    for k, nbytes in enumerate(per_bin):
        dur_s = (edges[k + 1] - edges[k]) * 1e-6
        rows.append((k, nbytes / dur_s))
    vals = sorted(v for _, v in rows)
    m = len(vals) // 2
    median = vals[m] if len(vals) % 2 else 0.5 * (vals[m - 1] + vals[m])
    return rows, median


@dataclass(frozen=True)
class BinStationStats:
    bin: int
    station: int
    successes: int
    failures: int
    attempts: int


def bin_stats(trace: AlignedTrace, n_stations: int) -> list[BinStationStats]:
    """Per-bin, per-station success/failure/attempt counts."""
    edges = trace.bin_edges
    if len(edges) < 2:
        raise DataError("bins not defined")
    nbins = len(edges) - 1
    succ = [[0] * n_stations for _ in range(nbins)]
    fail = [[0] * n_stations for _ in range(nbins)]
    for e in trace.entries:
        if e.outcome is Outcome.DISCARD:
            continue
        k = bisect.bisect_right(edges, e.t_us) - 1
        if not (0 <= k < nbins and e.t_us < edges[k + 1]):
            continue
        if e.outcome is Outcome.SUCCESS:
            succ[k][e.station] += 1
        else:
            fail[k][e.station] += 1
    return [
        BinStationStats(k, j, succ[k][j], fail[k][j], succ[k][j] + fail[k][j])
        for k in range(nbins)
        for j in range(n_stations)
    ]


def trace_from_sim(
    result: SimResult,
    config: ScenarioConfig,
    beacon_interval_us: float = 10_000.0,
    beacons_per_bin: int = 10,
) -> AlignedTrace:
    """View a simulator result as an aligned trace with synthetic exact
    beacons, so the same pipeline serves synthetic and real logs."""
    entries = tuple(
        LogEntry(
            t_us=e.slot * config.slot_us,
            station=e.station,
            outcome=e.outcome,
            retry=e.retry,
            cw_used=e.cw_used,
            payload_bytes=e.payload_bytes,
        )
        for e in result.events
    )
    horizon_us = result.elapsed_slots * config.slot_us
    step = beacon_interval_us * beacons_per_bin
    n_edges = max(2, int(horizon_us // step) + 1)
    edges = tuple(k * step for k in range(n_edges))
    return AlignedTrace(entries=entries, bin_edges=edges)


def trace_from_events(
    events: list[TxEvent],
    slot_us: float = 9.0,
    beacon_interval_us: float = 10_000.0,
    beacons_per_bin: int = 10,
) -> AlignedTrace:
    """Aligned trace from a parsed trace file with synthesized beacons."""
    entries = tuple(
        LogEntry(
            t_us=e.slot * slot_us,
            station=e.station,
            outcome=e.outcome,
            retry=e.retry,
            cw_used=e.cw_used,
            payload_bytes=e.payload_bytes,
        )
        for e in events
    )
    horizon = max((e.t_us for e in entries), default=0.0)
    step = beacon_interval_us * beacons_per_bin
    n_edges = max(2, int(horizon // step) + 2)
    edges = tuple(k * step for k in range(n_edges))
    return AlignedTrace(entries=entries, bin_edges=edges)
