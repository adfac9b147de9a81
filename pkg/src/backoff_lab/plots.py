"""Figure rendering for the report path.

Each function takes already-computed rows and writes one PNG next to the
corresponding CSV.  Rendering is headless (Agg backend); nothing here does
any computation beyond axis bookkeeping.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .analytic import OptimaRow  # noqa: E402
from .sim import SweepRow  # noqa: E402


def _finish(fig, path: str):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_optima(rows: list[OptimaRow], path: str):
    """Optimal backoff factors and expected window versus station count."""
    ns = [r.n for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(ns, [r.r_penalty for r in rows], "o-", label="penalty")
    ax1.plot(ns, [r.r_rollback for r in rows], "s-", label="rollback")
    ax1.set_xlabel("stations")
    ax1.set_ylabel("optimal backoff factor r")
    ax1.legend()
    ax1.grid(True, alpha=0.3)
    ax2.plot(ns, [r.e_cw for r in rows], "d-", color="tab:green")
    ax2.set_xlabel("stations")
    ax2.set_ylabel("optimal expected CW")
    ax2.grid(True, alpha=0.3)
    _finish(fig, path)


def plot_sweep(rows: list[SweepRow], path: str):
    """Throughput, fairness and collision fraction across backoff factors."""
    rs = [r.r for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    axes[0].plot(rs, [r.aggregate_throughput_mbps for r in rows], "o-")
    axes[0].set_ylabel("throughput (Mb/s)")
    axes[1].plot(rs, [r.jain_index for r in rows], "o-", color="tab:orange")
    axes[1].set_ylabel("Jain index")
    axes[1].set_ylim(0, 1.05)
    axes[2].plot(rs, [r.collision_fraction for r in rows], "o-", color="tab:red")
    axes[2].set_ylabel("collision fraction")
    for ax in axes:
        ax.set_xlabel("backoff factor r")
        ax.grid(True, alpha=0.3)
    _finish(fig, path)


def plot_jain_series(series: list[float], w: int, path: str):
    """Sliding-window fairness over the trace."""
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(range(len(series)), series, lw=0.8)
    ax.set_xlabel(f"window start (successes, w={w})")
    ax.set_ylabel("Jain index")
    ax.set_ylim(0, 1.05)
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def plot_throughput_bins(rows: list[tuple[int, float]], path: str):
    """Per-bin aggregate throughput."""
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.bar([k for k, _ in rows], [v * 8e-6 for _, v in rows], width=0.9)
    ax.set_xlabel("bin")
    ax.set_ylabel("throughput (Mb/s)")
    ax.grid(True, axis="y", alpha=0.3)
    _finish(fig, path)


def plot_update_log(updates: list[tuple[int, object]], path: str):
    """Active-station estimate over time from broadcast updates."""
    fig, ax = plt.subplots(figsize=(8, 3))
    if updates:
        slots = [s for s, _ in updates]
        ns = [u.n_active for _, u in updates]
        ax.step(slots, ns, where="post", marker="o")
    ax.set_xlabel("slot")
    ax.set_ylabel("estimated active stations")
    ax.grid(True, alpha=0.3)
    _finish(fig, path)
