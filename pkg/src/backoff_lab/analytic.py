"""Saturation-throughput model and throughput-optimal backoff factors.

Expected contention windows for the rollback and penalty protocols are
closed-form functions of the backoff factor r and the collision probability
p_c.  The slot-level probability system links an expected window to attempt,
idle, success and collision probabilities; maximizing throughput over the
attempt probability yields one optimal expected window per station count,
which is then inverted through the protocol's window formula to get r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

CW_MIN = 16
MAX_TX = 7  # attempts per frame before discard


@dataclass(frozen=True)
class AnalyticParams:
    """Timing and size constants.  Defaults are 802.11g at its maximum rate
    with a 1540-byte payload."""

    n: int
    t_s: float = 3.22e-4  # s, successful transmission
    t_c: float = 2.92e-4  # s, collision
    t_n: float = 9e-6  # s, idle slot
    payload_bytes: int = 1540
    cw_min: int = CW_MIN
    k: int = MAX_TX

    def __post_init__(self):
        if not self.t_s >= self.t_c > self.t_n > 0:
            raise ValueError("need t_s >= t_c > t_n > 0")
        if self.payload_bytes <= 0:
            raise ValueError("payload_bytes must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class ProbabilityPoint:
    p_t: float
    p_n: float
    p_s: float
    p_c: float


def timing_from_phy(
    rate_bps: float,
    payload_bytes: int,
    difs_s: float = 28e-6,
    sifs_s: float = 10e-6,
    ack_s: float = 24e-6,
) -> tuple[float, float]:
    """Compose (t_s, t_c) from a bitrate and interframe spacings.

    t_s = DIFS + TX + SIFS + ACK; t_c = DIFS + TX + SIFS.
    """
    tx = 8.0 * payload_bytes / rate_bps
    t_c = difs_s + tx + sifs_s
    return t_c + ack_s, t_c


_SINGULARITY_EPS = 1e-9


def expected_cw_rollback(r: float, p_c: float, params: AnalyticParams) -> float:
    """Expected contention window under rollback backoff."""
    if r <= 0 or not 0.0 <= p_c < 1.0:
        raise ValueError("need r > 0 and p_c in [0, 1)")
    k, w = params.k, params.cw_min - 1
    if abs(p_c - r) < _SINGULARITY_EPS:
        # removable singularity: (p_c^k - r^k)/(p_c - r) -> sum p_c^i r^(k-1-i)
        s = sum(p_c**i * r ** (k - 1 - i) for i in range(k))
        return w * (1 - p_c) * s / (2 * (1 - p_c**k))
    return (
        w * (1 - p_c) * (p_c**k - r**k) / (2 * (1 - p_c**k) * (p_c - r))
    )


def expected_cw_penalty(r: float, p_c: float, params: AnalyticParams) -> float:
    """Expected contention window under backoff with penalty (two-state chain
    with stationary weights 1/(2-p_c) and (1-p_c)/(2-p_c))."""
    if r <= 0 or not 0.0 <= p_c < 1.0:
        raise ValueError("need r > 0 and p_c in [0, 1)")
    k, w = params.k, params.cw_min - 1
    if abs(p_c * r - 1.0) < _SINGULARITY_EPS:
        # removable singularity: ((p_c r)^k - 1)/(p_c r - 1) -> sum (p_c r)^i
        ladder = sum((p_c * r) ** i for i in range(k))
    else:
        ladder = ((p_c * r) ** k - 1) / (p_c * r - 1)
    bracket = ladder - r ** (k - 1) * (p_c**k - 1)
    return (1 / (2 - p_c)) * ((1 - p_c) / (1 - p_c**k)) * (w / 2) * bracket


def probabilities(e_cw: float, n: int) -> ProbabilityPoint:
    """Slot-level probabilities for n stations with expected window e_cw."""
    if e_cw <= 0 or n < 1:
        raise ValueError("need e_cw > 0 and n >= 1")
    p_t = 2.0 / (e_cw + 1.0)
    p_n = (1.0 - p_t) ** n
    p_s = n * p_t * (1.0 - p_t) ** (n - 1)
    return ProbabilityPoint(p_t=p_t, p_n=p_n, p_s=p_s, p_c=1.0 - p_s - p_n)


def probabilities_from_pt(p_t: float, n: int) -> ProbabilityPoint:
    p_n = (1.0 - p_t) ** n
    p_s = n * p_t * (1.0 - p_t) ** (n - 1)
    return ProbabilityPoint(p_t=p_t, p_n=p_n, p_s=p_s, p_c=1.0 - p_s - p_n)


def throughput(pp: ProbabilityPoint, params: AnalyticParams) -> float:
    """Saturation throughput in bytes per second."""
    denom = pp.p_s * params.t_s + pp.p_c * params.t_c + pp.p_n * params.t_n
    return params.payload_bytes * pp.p_s / denom


def newton_bisect(
    f,
    lo: float,
    hi: float,
    fprime=None,
    ftol: float = 1e-12,
    xtol: float = 0.0,
    max_iter: int = 200,
) -> float:
    """Newton iteration safeguarded by a maintained bisection bracket.

    Falls back to a secant step when no derivative is given, and to plain
    bisection whenever a step leaves the bracket.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    x, fx = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    x_prev, fx_prev = (hi, fhi) if x == lo else (lo, flo)
    for _ in range(max_iter):
        if abs(fx) < ftol or hi - lo <= xtol:
            return x
        if fprime is not None:
            d = fprime(x)
            step_ok = d != 0
            x_new = x - fx / d if step_ok else None
        else:
            denom = fx - fx_prev
            step_ok = denom != 0
            x_new = x - fx * (x - x_prev) / denom if step_ok else None
        if not step_ok or not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        f_new = f(x_new)
        if flo * f_new < 0:
            hi, fhi = x_new, f_new
        else:
            lo, flo = x_new, f_new
        x_prev, fx_prev = x, fx
        x, fx = x_new, f_new
    return x


def solve_optimal_pt(params: AnalyticParams) -> float:
    """Attempt probability maximizing throughput.

    Root of (N p - 1)/(1 - p)^N = (t_n - t_c)/t_c on (0, 1/N]; the left side
    is strictly increasing there, so a bracketed Newton solve is reliable.
    """
    n = params.n
    if n < 2:
        raise ValueError("optimization needs n >= 2")
    rhs = (params.t_n - params.t_c) / params.t_c

    def f(p: float) -> float:
        return (n * p - 1.0) / (1.0 - p) ** n - rhs

    def fp(p: float) -> float:
        return n * (n - 1) * p / (1.0 - p) ** (n + 1)

    lo, hi = 1e-6, min(1.0 / n + 0.1, 1.0 - 1e-9)
    if f(lo) * f(hi) > 0:
        raise ValueError("no root bracketed; timing constants out of model domain")
    return newton_bisect(f, lo, hi, fprime=fp, ftol=1e-13)


def optimal_expected_cw(params: AnalyticParams) -> float:
    """E[CW] at the throughput optimum: 2/p_t* - 1."""
    return 2.0 / solve_optimal_pt(params) - 1.0


_EXPECTED_CW = {
    "penalty": expected_cw_penalty,
    "rollback": expected_cw_rollback,
}

R_BRACKET = (1.0, 4.0)


def self_consistent_cw(
    r: float, params: AnalyticParams, kind: str, tol: float = 1e-12
) -> tuple[float, float]:
    """Fixed point (E[CW], p_c) of the coupled window/probability system for
    a given r.  Sensitivity-analysis companion to the two-stage solver."""
    e_cw_fn = _EXPECTED_CW[kind]
    p_c = 0.0
    e_cw = e_cw_fn(r, p_c, params)
    for _ in range(10_000):
        p_c_new = probabilities(e_cw, params.n).p_c
        e_cw_new = e_cw_fn(r, p_c_new, params)
        if abs(e_cw_new - e_cw) < tol and abs(p_c_new - p_c) < tol:
            return e_cw_new, p_c_new
        e_cw, p_c = e_cw_new, p_c_new
    raise RuntimeError("fixed-point iteration did not converge")


def solve_optimal_r(
    params: AnalyticParams, kind: str, simultaneous: bool = False
) -> float:
    """Backoff factor whose expected window matches the throughput optimum.

    Two-stage by default: fix E[CW]* from the optimal attempt probability,
    compute p_c* once, then invert the protocol's window formula in r.  With
    simultaneous=True, r is solved against the fully self-consistent window
    instead.
    """
    if kind not in _EXPECTED_CW:
        raise ValueError(f"unknown protocol kind: {kind!r}")
    e_target = optimal_expected_cw(params)
    if simultaneous:
        def f(r: float) -> float:
            return self_consistent_cw(r, params, kind)[0] - e_target
    else:
        p_c = probabilities(e_target, params.n).p_c
        e_cw_fn = _EXPECTED_CW[kind]

        def f(r: float) -> float:
            return e_cw_fn(r, p_c, params) - e_target

    lo, hi = R_BRACKET
    if f(lo + 1e-12) * f(hi) > 0:
        raise ValueError(
            f"no backoff factor in [{lo}, {hi}] reaches the optimal window"
        )
    return newton_bisect(f, lo + 1e-12, hi, ftol=1e-9)


@dataclass(frozen=True)
class OptimaRow:
    n: int
    e_cw: float
    r_penalty: float
    r_rollback: float
    cw_fixed: float  # the optimal expected window used as a fixed window


def table_of_optima(
    params_base: AnalyticParams, n_values
) -> list[OptimaRow]:
    """Optimal window and backoff factors per station count."""
    rows = []
    for n in n_values:
        if not 2 <= n <= 200:
            raise ValueError(f"station count out of supported range [2, 200]: {n}")
        p = AnalyticParams(
            n=n,
            t_s=params_base.t_s,
            t_c=params_base.t_c,
            t_n=params_base.t_n,
            payload_bytes=params_base.payload_bytes,
            cw_min=params_base.cw_min,
            k=params_base.k,
        )
        e_cw = optimal_expected_cw(p)
        rows.append(
            OptimaRow(
                n=n,
                e_cw=e_cw,
                r_penalty=solve_optimal_r(p, "penalty"),
                r_rollback=solve_optimal_r(p, "rollback"),
                cw_fixed=e_cw,
            )
        )
    return rows


OPTIMA_CSV_HEADER = "N,E_cw,r_penalty,r_rollback,cw_fixed"


def optima_csv_lines(rows: list[OptimaRow]) -> list[str]:
    lines = [OPTIMA_CSV_HEADER]
    for row in rows:
        lines.append(
            f"{row.n},{row.e_cw:.6f},{row.r_penalty:.6f},"
            f"{row.r_rollback:.6f},{row.cw_fixed:.6f}"
        )
    return lines


def parse_optima_csv(text: str) -> list[OptimaRow]:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("N,"):
            continue
        n, e_cw, r_p, r_r, cw_f = line.split(",")
        rows.append(
            OptimaRow(
                n=int(n),
                e_cw=float(e_cw),
                r_penalty=float(r_p),
                r_rollback=float(r_r),
                cw_fixed=float(cw_f),
            )
        )
    return rows
