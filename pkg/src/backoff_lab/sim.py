"""Slotted discrete-event simulator of stations contending for one channel.

Time is unitless slots.  A successful transmission occupies tx_slots, a
collision collision_slots.  Backoff counters freeze in slots the station
senses busy; a station transmits in the slot its counter reaches zero.
Mutually audible stations starting in the same slot all collide; mutually
hidden transmissions overlap at the receiver where a power-threshold capture
rule decides the outcome.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace

from .core import (
    BackoffPolicy,
    PolicyKind,
    StationState,
    build_cw_table,
    initial_state,
    on_failure,
    on_success,
    window_for_next_attempt,
)
from .rng import Word16Source, derive_seed, draw_backoff


class Outcome(enum.Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    CHANNEL_LOSS = "loss"
    DISCARD = "discard"


@dataclass(frozen=True)
class TxEvent:
    slot: int
    station: int
    outcome: Outcome
    retry: int
    cw_used: int
    payload_bytes: int


@dataclass(frozen=True)
class StationCounters:
    successes: int
    failures: int
    discards: int


@dataclass
class SimResult:
    events: list[TxEvent]
    per_station: list[StationCounters]
    elapsed_slots: int
    updates: list[tuple[int, object]] = field(default_factory=list)

    def aggregate_throughput_mbps(self, slot_us: float) -> float:
        bits = sum(e.payload_bytes * 8 for e in self.events if e.outcome is Outcome.SUCCESS)
        return bits / (self.elapsed_slots * slot_us)


@dataclass(frozen=True)
class ScenarioConfig:
    n_stations: int
    policies: tuple[BackoffPolicy, ...]
    duration_slots: int
    slot_us: float = 9.0
    tx_slots: int = 36  # round(t_s / t_n) for the default timing constants
    collision_slots: int = 32  # round(t_c / t_n)
    loss_prob: float = 0.0
    sensing: tuple[tuple[bool, ...], ...] | None = None  # None = everyone hears everyone
    power_dbm: tuple[float, ...] | None = None
    capture_threshold_db: float = math.inf
    seed: int = 1
    payload_bytes: int = 1540
    onoff_period_slots: int | None = None
    onoff_stations: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.n_stations < 1:
            raise ValueError("n_stations must be positive")
        if self.duration_slots < 1:
            raise ValueError("duration_slots must be positive")
        if len(self.policies) != self.n_stations:
            raise ValueError("need one policy per station")
        if not self.tx_slots >= self.collision_slots >= 1:
            raise ValueError("need tx_slots >= collision_slots >= 1")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.sensing is not None:
            n = self.n_stations
            if len(self.sensing) != n or any(len(row) != n for row in self.sensing):
                raise ValueError("sensing matrix must be n x n")
            for i in range(n):
                if not self.sensing[i][i]:
                    raise ValueError("sensing diagonal must be true")
                for j in range(n):
                    if self.sensing[i][j] != self.sensing[j][i]:
                        raise ValueError("sensing matrix must be symmetric")
        if self.power_dbm is not None and len(self.power_dbm) != self.n_stations:
            raise ValueError("need one power per station")
        if self.onoff_stations and self.onoff_period_slots is None:
            raise ValueError("onoff stations given without a period")


def uniform_scenario(policy: BackoffPolicy, n: int, duration: int, **kw) -> ScenarioConfig:
    """Scenario where every station runs the same policy."""
    return ScenarioConfig(
        n_stations=n, policies=(policy,) * n, duration_slots=duration, **kw
    )


class _Tx:
    __slots__ = ("station", "start", "end", "retry", "cw_used",
                 "audible_collision", "max_rival_dbm")

    def __init__(self, station, start, end, retry, cw_used):
        self.station = station
        self.start = start
        self.end = end
        self.retry = retry
        self.cw_used = cw_used
        self.audible_collision = False
        self.max_rival_dbm = None


class _Station:
    __slots__ = ("idx", "policy", "table", "st", "backoff", "cw_used",
                 "has_frame", "tx", "rng", "loss_rng", "pending_r",
                 "successes", "failures", "discards", "window_successes")

    def __init__(self, idx: int, policy: BackoffPolicy, seed: int):
        self.idx = idx
        self.policy = policy
        self.table = build_cw_table(policy)
        self.st = initial_state(policy)
        self.rng = Word16Source(derive_seed(seed, 1, idx))
        self.loss_rng = Word16Source(derive_seed(seed, 2, idx))
        self.backoff = 0
        self.cw_used = 0
        self.has_frame = False
        self.tx = None
        self.pending_r = None
        self.successes = 0
        self.failures = 0
        self.discards = 0
        self.window_successes = 0

    def draw(self):
        self.cw_used = window_for_next_attempt(self.st, self.table, self.policy)
        self.backoff = draw_backoff(self.cw_used, self.rng)

    def acquire_frame(self):
        self.has_frame = True
        self.draw()

    def apply_pending(self):
        if self.pending_r is not None and self.policy.kind is not PolicyKind.FIXED_CW:
            self.policy = replace(self.policy, r=self.pending_r)
            self.table = build_cw_table(self.policy)
        self.pending_r = None


def run(
    config: ScenarioConfig,
    controller=None,
    debug_trace: list | None = None,
) -> SimResult:
    """Simulate the scenario; with a controller, run the adaptation loop.

    The controller (see adapt.AdaptController) is polled every
    controller.interval_slots; a broadcast update changes each station's
    backoff factor at its next frame boundary.

    Design notes: losses and capture failures still occupy success-length
    airtime (the transmitter sends the full frame); only same-slot audible
    collisions use the shorter collision duration.
    """
    n = config.n_stations
    sensing = config.sensing
    fully_audible = sensing is None or all(all(row) for row in sensing)
    powers = config.power_dbm or (0.0,) * n
    period = config.onoff_period_slots
    onoff = config.onoff_stations
    duration = config.duration_slots
    interval = controller.interval_slots if controller is not None else None

    def traffic_on(idx: int, slot: int) -> bool:
        if idx not in onoff:
            return True
        return (slot // period) % 2 == 0

    stations = [_Station(i, config.policies[i], config.seed) for i in range(n)]
    for s in stations:
        if traffic_on(s.idx, 0):
            s.acquire_frame()

    events: list[TxEvent] = []
    updates: list[tuple[int, object]] = []
    active: list[_Tx] = []
    slot = 0
    next_adapt = interval if interval is not None else None

    def hears(i: int, j: int) -> bool:
        return True if sensing is None else sensing[i][j]

    def resolve(tx: _Tx, end_slot: int):
        s = stations[tx.station]
        s.tx = None
        if tx.audible_collision:
            outcome = Outcome.COLLISION
        elif tx.max_rival_dbm is not None:
            won = powers[tx.station] >= tx.max_rival_dbm + config.capture_threshold_db
            outcome = Outcome.SUCCESS if won else Outcome.COLLISION
        elif config.loss_prob > 0.0 and s.loss_rng.next_float() < config.loss_prob:
            outcome = Outcome.CHANNEL_LOSS
        else:
            outcome = Outcome.SUCCESS
        events.append(TxEvent(tx.start, tx.station, outcome, tx.retry,
                              tx.cw_used, config.payload_bytes))
        frame_done = False
        if outcome is Outcome.SUCCESS:
            s.successes += 1
            s.window_successes += 1
            s.st = on_success(s.st, s.policy)
            frame_done = True
        else:
            s.failures += 1
            s.st, discarded = on_failure(s.st, s.policy)
            if discarded:
                s.discards += 1
                events.append(TxEvent(tx.start, tx.station, Outcome.DISCARD,
                                      tx.retry, tx.cw_used, config.payload_bytes))
                frame_done = True
        if frame_done:
            s.apply_pending()
            s.has_frame = False
            if traffic_on(s.idx, end_slot):
                s.acquire_frame()
        else:
            s.draw()

    while slot < duration:
        # 1. transmissions ending at this slot boundary free the channel first
        if active:
            ending = [tx for tx in active if tx.end <= slot]
            if ending:
                active = [tx for tx in active if tx.end > slot]
                for tx in sorted(ending, key=lambda t: t.station):
                    resolve(tx, slot)

        # 2. traffic phase boundary: stations whose on-period starts here wake up
        if onoff and period is not None and slot % period == 0:
            for s in stations:
                if s.idx in onoff and s.tx is None and not s.has_frame:
                    if traffic_on(s.idx, slot):
                        s.acquire_frame()

        # 3. adaptation boundary
        if next_adapt is not None and slot >= next_adapt:
            window_counts = [s.window_successes for s in stations]
            for s in stations:
                s.window_successes = 0
            update = controller.observe(window_counts, config, slot)
            if update is not None:
                updates.append((slot, update))
                for s in stations:
                    if s.policy.kind is PolicyKind.PENALTY:
                        s.pending_r = update.r_penalty
                    elif s.policy.kind is PolicyKind.ROLLBACK:
                        s.pending_r = update.r_rollback
            next_adapt += interval

        # 4. sensing state, then new transmissions start
        busy = [False] * n
        for tx in active:
            for i in range(n):
                if i != tx.station and hears(i, tx.station):
                    busy[i] = True
        starters = [
            s for s in stations
            if s.has_frame and s.tx is None and s.backoff == 0 and not busy[s.idx]
        ]
        if starters:
            new_txs = []
            for s in starters:
                tx = _Tx(s.idx, slot, slot + config.tx_slots, s.st.retry, s.cw_used)
                s.tx = tx
                s.has_frame = True
                new_txs.append(tx)
            # same-slot audible starters collide with each other
            for a in new_txs:
                for b in new_txs:
                    if a is not b and hears(a.station, b.station):
                        a.audible_collision = True
            for a in new_txs:
                if a.audible_collision:
                    a.end = a.start + config.collision_slots
            # hidden overlap against everything currently on the air
            for a in new_txs:
                for b in active + new_txs:
                    if a is b or hears(a.station, b.station):
                        continue
                    pa, pb = powers[a.station], powers[b.station]
                    a.max_rival_dbm = pb if a.max_rival_dbm is None else max(a.max_rival_dbm, pb)
                    b.max_rival_dbm = pa if b.max_rival_dbm is None else max(b.max_rival_dbm, pa)
            active.extend(new_txs)
            for i in range(n):
                busy[i] = False
            for tx in active:
                for i in range(n):
                    if i != tx.station and hears(i, tx.station):
                        busy[i] = True

        # 5. jump to the next slot where anything can change
        candidates = [duration]
        if active:
            candidates.append(min(tx.end for tx in active))
        countdown = [
            s for s in stations
            if s.has_frame and s.tx is None and not busy[s.idx] and s.backoff > 0
        ]
        for s in countdown:
            candidates.append(slot + s.backoff)
        if onoff and period is not None:
            candidates.append((slot // period + 1) * period)
        if next_adapt is not None:
            candidates.append(next_adapt)
        nxt = min(candidates)
        delta = max(1, nxt - slot)
        for s in countdown:
            dec = min(delta, s.backoff)
            if debug_trace is not None:
                debug_trace.append((slot, s.idx, s.backoff, dec, False))
            s.backoff -= dec
        if debug_trace is not None:
            for s in stations:
                if s.has_frame and s.tx is None and busy[s.idx]:
                    debug_trace.append((slot, s.idx, s.backoff, 0, True))
        slot += delta

    # transmissions past the horizon are cut off unresolved (not counted)
    events.sort(key=lambda e: (e.slot, e.station))
    per_station = [
        StationCounters(s.successes, s.failures, s.discards) for s in stations
    ]
    return SimResult(
        events=events,
        per_station=per_station,
        elapsed_slots=duration,
        updates=updates,
    )


def run_adaptive(config: ScenarioConfig, controller) -> SimResult:
    """run() with the access-point adaptation loop enabled."""
    if controller is None:
        raise ValueError("controller required")
    return run(config, controller=controller)


@dataclass(frozen=True)
class SweepRow:
    r: float
    aggregate_throughput_mbps: float
    jain_index: float
    collision_fraction: float


def sweep_r(base: ScenarioConfig, r_values) -> list[SweepRow]:
    """One run per backoff factor, seeded deterministically per value."""
    from .metrics import jain_fairness, trace_from_sim

    r_values = list(r_values)
    if not r_values:
        raise ValueError("r_values must be non-empty")
    rows = []
    for i, r in enumerate(r_values):
        policies = tuple(
            p if p.kind is PolicyKind.FIXED_CW else replace(p, r=r)
            for p in base.policies
        )
        cfg = replace(base, policies=policies, seed=derive_seed(base.seed, 7, i))
        result = run(cfg)
        attempts = sum(c.successes + c.failures for c in result.per_station)
        fails = sum(c.failures for c in result.per_station)
        trace = trace_from_sim(result, cfg)
        series = jain_fairness(trace, base.n_stations, 10 * base.n_stations)
        jain = float(_median(series)) if len(series) else float("nan")
        rows.append(
            SweepRow(
                r=r,
                aggregate_throughput_mbps=result.aggregate_throughput_mbps(base.slot_us),
                jain_index=jain,
                collision_fraction=fails / attempts if attempts else 0.0,
            )
        )
    return rows


def _median(xs):
    xs = sorted(xs)
    m = len(xs) // 2
    return xs[m] if len(xs) % 2 else 0.5 * (xs[m - 1] + xs[m])


TRACE_HEADER = "slot,station,outcome,retry,cw,bytes"


def trace_lines(result: SimResult) -> list[str]:
    lines = [TRACE_HEADER]
    for e in result.events:
        lines.append(
            f"{e.slot},{e.station},{e.outcome.value},{e.retry},{e.cw_used},{e.payload_bytes}"
        )
    return lines


def parse_trace(text: str) -> list[TxEvent]:
    events = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("slot,"):
            continue
        slot, station, outcome, retry, cw, nbytes = line.split(",")
        events.append(
            TxEvent(int(slot), int(station), Outcome(outcome), int(retry),
                    int(cw), int(nbytes))
        )
    return events


def summary_dict(result: SimResult, config: ScenarioConfig) -> dict:
    return {
        "elapsed_slots": result.elapsed_slots,
        "aggregate_throughput_mbps": result.aggregate_throughput_mbps(config.slot_us),
        "per_station": [
            {"station": i, "successes": c.successes, "failures": c.failures,
             "discards": c.discards}
            for i, c in enumerate(result.per_station)
        ],
        "n_updates": len(result.updates),
    }


def summary_json(result: SimResult, config: ScenarioConfig) -> str:
    return json.dumps(summary_dict(result, config), indent=2, sort_keys=True)
