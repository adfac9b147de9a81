"""Desk-scale laboratory for 802.11-style backoff protocols.

Four pieces: a slotted contention simulator (sim), a saturation-throughput
model with an optimal-backoff-factor solver (analytic), a measurement
pipeline (metrics) and an access-point adaptation loop (adapt), all behind
one CLI (cli).
"""

from .analytic import (
    AnalyticParams,
    OptimaRow,
    expected_cw_penalty,
    expected_cw_rollback,
    optimal_expected_cw,
    solve_optimal_pt,
    solve_optimal_r,
    table_of_optima,
    throughput,
)
from .core import BackoffPolicy, PenaltySemantics, PolicyKind, build_cw_table
from .sim import Outcome, ScenarioConfig, SimResult, run, run_adaptive, sweep_r

__all__ = [
    "AnalyticParams",
    "BackoffPolicy",
    "OptimaRow",
    "Outcome",
    "PenaltySemantics",
    "PolicyKind",
    "ScenarioConfig",
    "SimResult",
    "build_cw_table",
    "expected_cw_penalty",
    "expected_cw_rollback",
    "optimal_expected_cw",
    "run",
    "run_adaptive",
    "solve_optimal_pt",
    "solve_optimal_r",
    "sweep_r",
    "table_of_optima",
    "throughput",
]

__version__ = "0.1.0"
