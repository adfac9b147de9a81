"""Access-point adaptation: per-station channel-time accounting, active
station estimation and backoff-factor broadcast.

Shares are fractions of the update interval a station kept the channel busy.
The threshold estimator counts stations above a fixed share; the ratio
estimator compares each share against a fair share x = sum/n_assoc (with an
epsilon guard against oscillation) and credits the leftovers in bulk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analytic import OptimaRow


class NoTrafficError(ValueError):
    """All shares are zero; the caller should keep its previous estimate."""


@dataclass(frozen=True)
class UsageRecord:
    station: int
    frames: tuple[tuple[int, float], ...]  # (bytes, bitrate bits/s)
    window_s: float

    def __post_init__(self):
        if self.window_s <= 0:
            raise ValueError("window must be positive")
        for nbytes, rate in self.frames:
            if nbytes <= 0 or rate <= 0:
                raise ValueError("frame sizes and bitrates must be positive")


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str  # "threshold" | "ratio"
    n_assoc: int
    tau_threshold: float | None = None  # threshold estimator only; no default
    epsilon: float = 0.8
    window_s: float = 1.0

    def __post_init__(self):
        if self.kind not in ("threshold", "ratio"):
            raise ValueError(f"unknown estimator kind: {self.kind!r}")
        if self.kind == "threshold":
            if self.tau_threshold is None or not 0.0 <= self.tau_threshold <= 1.0:
                raise ValueError("threshold estimator needs tau_threshold in [0, 1]")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must be in (0, 1]")
        if self.n_assoc < 1:
            raise ValueError("n_assoc must be positive")


def channel_share(rec: UsageRecord) -> float:
    """Fraction of the interval the station's frames kept the channel busy:
    sum(8 P_k / R_k) / T, clamped to [0, 1]."""
    busy = sum(8.0 * nbytes / rate for nbytes, rate in rec.frames)
    return min(1.0, busy / rec.window_s)


def estimate_threshold(shares: list[float], cfg: EstimatorConfig) -> int:
    """Count stations whose share reaches the configured threshold
    (minimum 1: an access point with traffic has at least one sender)."""
    if len(shares) != cfg.n_assoc:
        raise ValueError("need one share per associated station")
    count = sum(1 for tau in shares if tau >= cfg.tau_threshold)
    return max(1, min(count, cfg.n_assoc))


def estimate_ratio(shares: list[float], cfg: EstimatorConfig) -> int:
    """Fair-share estimator: stations at or above epsilon * fair-share count
    directly; sub-fair-share leftovers are pooled and floored against the
    fair share."""
    if len(shares) != cfg.n_assoc:
        raise ValueError("need one share per associated station")
    total = sum(shares)
    if total <= 0.0:
        raise NoTrafficError("all shares are zero")
    x = total / cfg.n_assoc
    cut = cfg.epsilon * x
    count = sum(1 for tau in shares if tau >= cut)
    leftover = sum(tau for tau in shares if tau < cut)
    count += math.floor(leftover / x)
    return max(1, min(count, cfg.n_assoc))


@dataclass(frozen=True)
class BackoffFactorUpdate:
    seq: int
    n_active: int
    r_penalty: float
    r_rollback: float
    clamped: bool = False

    def wire_line(self) -> str:
        return f"{self.seq},{self.n_active},{self.r_penalty:.6f},{self.r_rollback:.6f}"


def lookup_optima(n_active: int, optima: list[OptimaRow]) -> tuple[OptimaRow, bool]:
    """Row for n_active, clamped to the nearest table edge when outside."""
    if not optima:
        raise ValueError("empty optima table")
    rows = sorted(optima, key=lambda r: r.n)
    for row in rows:
        if row.n == n_active:
            return row, False
    if n_active < rows[0].n:
        return rows[0], True
    if n_active > rows[-1].n:
        return rows[-1], True
    # inside the range but no exact row: nearest by station count
    best = min(rows, key=lambda r: abs(r.n - n_active))
    return best, True


class UpdateStream:
    """Broadcast source with hysteresis: an update is emitted (and seq
    advanced) only when the active-station estimate changes."""

    def __init__(self, optima: list[OptimaRow]):
        self._optima = optima
        self._seq = 0
        self._last_n: int | None = None

    def make_update(self, n_active: int) -> BackoffFactorUpdate | None:
        if n_active == self._last_n:
            return None
        row, clamped = lookup_optima(n_active, self._optima)
        self._seq += 1
        self._last_n = n_active
        return BackoffFactorUpdate(
            seq=self._seq,
            n_active=n_active,
            r_penalty=row.r_penalty,
            r_rollback=row.r_rollback,
            clamped=clamped,
        )


def make_update(
    n_active: int, optima: list[OptimaRow], stream: UpdateStream
) -> BackoffFactorUpdate | None:
    """Functional wrapper over UpdateStream for one-off use."""
    return stream.make_update(n_active)


class AdaptController:
    """Sequential controller the simulator polls at interval boundaries.

    Builds per-station usage records from the window's delivered frames,
    runs the configured estimator and broadcasts factor updates from the
    optima table.
    """

    def __init__(
        self,
        estimator: EstimatorConfig,
        optima: list[OptimaRow],
        interval_slots: int,
    ):
        if interval_slots < 1:
            raise ValueError("interval_slots must be positive")
        self.estimator = estimator
        self.interval_slots = interval_slots
        self.stream = UpdateStream(optima)
        self.estimates: list[tuple[int, int]] = []  # (slot, n_active)
        self._prev_estimate: int | None = None

    def observe(self, window_success_counts, config, slot) -> BackoffFactorUpdate | None:
        window_s = self.interval_slots * config.slot_us * 1e-6
        frame_air_s = config.tx_slots * config.slot_us * 1e-6
        # bitrate chosen so one delivered frame accounts for exactly its
        # airtime in the share computation
        rate = 8.0 * config.payload_bytes / frame_air_s
        shares = []
        for station, count in enumerate(window_success_counts):
            rec = UsageRecord(
                station=station,
                frames=((config.payload_bytes, rate),) * count,
                window_s=window_s,
            )
            shares.append(channel_share(rec))
        try:
            if self.estimator.kind == "threshold":
                n_active = estimate_threshold(shares, self.estimator)
            else:
                n_active = estimate_ratio(shares, self.estimator)
        except NoTrafficError:
            if self._prev_estimate is None:
                return None
            n_active = self._prev_estimate
        self._prev_estimate = n_active
        self.estimates.append((slot, n_active))
        return self.stream.make_update(n_active)


UPDATE_LOG_HEADER = "slot,seq,n_active,r_penalty,r_rollback"


def update_log_lines(updates: list[tuple[int, BackoffFactorUpdate]]) -> list[str]:
    lines = [UPDATE_LOG_HEADER]
    for slot, u in updates:
        lines.append(f"{slot},{u.wire_line()}")
    return lines
