"""Acceptance gate: end-to-end checks of the solver, simulator, metrics
pipeline, estimators and adaptation loop at stated tolerances.

REFERENCE_OPTIMA holds externally tabulated optimal backoff factors used as
a regression target for the solver.  The solver's two-stage construction
reproduces the reference's optimal-window column but not its larger
expected-window column, so the strict tolerance check on the factors is
expected to fail for high station counts; the structural checks
(monotonicity, protocol ordering, runtime) must always hold.
"""

import random
import time
from statistics import median

import numpy as np
import pytest
from scipy.stats import chisquare

from backoff_lab.adapt import AdaptController, EstimatorConfig
from backoff_lab.analytic import (
    AnalyticParams,
    expected_cw_penalty,
    expected_cw_rollback,
    probabilities_from_pt,
    solve_optimal_pt,
    table_of_optima,
    throughput,
)
from backoff_lab.core import (
    BackoffPolicy,
    PenaltySemantics,
    PolicyKind,
    build_cw_table,
)
from backoff_lab.metrics import (
    AlignedTrace,
    LogEntry,
    collision_rate,
    jain_fairness,
    throughput_per_bin,
    trace_from_sim,
    truncate_all_active,
)
from backoff_lab.rng import Word16Source, draw_backoff
from backoff_lab.sim import (
    Outcome,
    ScenarioConfig,
    run,
    run_adaptive,
    trace_lines,
    uniform_scenario,
)

# N -> (r_penalty, r_rollback)
REFERENCE_OPTIMA = {
    2: (1.18, 1.11),
    3: (1.35, 1.25),
    4: (1.45, 1.31),
    5: (1.53, 1.38),
    6: (1.65, 1.45),
    7: (1.67, 1.50),
    8: (1.73, 1.55),
    9: (1.78, 1.65),
    10: (1.85, 1.67),
    11: (1.88, 1.69),
    12: (1.95, 1.75),
}

SEEDS = list(range(1, 11))
N = 12
JAIN_W = 10 * N


@pytest.fixture(scope="module")
def optima():
    return table_of_optima(AnalyticParams(n=12), range(2, 13))


def _protocol_run(kind, r, seed, semantics=PenaltySemantics.FIRMWARE,
                  duration=1_000_000):
    pol = BackoffPolicy(kind=kind, r=r, penalty_semantics=semantics)
    cfg = uniform_scenario(pol, N, duration, seed=seed)
    res = run(cfg)
    return res, trace_from_sim(res, cfg)


@pytest.fixture(scope="module")
def saturation_runs(optima):
    """One 10^6-slot run per protocol per seed at N=12, idealized channel."""
    r_pen = optima[-1].r_penalty
    r_roll = optima[-1].r_rollback
    t0 = time.monotonic()
    runs = {}
    for label, kind, r in (
        ("standard", PolicyKind.STANDARD, 2.0),
        ("penalty", PolicyKind.PENALTY, r_pen),
        ("rollback", PolicyKind.ROLLBACK, r_roll),
        ("standard_aggressive", PolicyKind.STANDARD, 2.6),
    ):
        per_seed = []
        for seed in SEEDS:
            _, trace = _protocol_run(kind, r, seed)
            per_seed.append(
                {
                    "collision": collision_rate(trace, "all_retries"),
                    "jain": median(jain_fairness(trace, N, JAIN_W)),
                }
            )
        runs[label] = per_seed
    runs["elapsed_s"] = time.monotonic() - t0
    return runs


class TestOptimaTable:
    def test_structure_ordering_and_runtime(self, optima):
        t0 = time.monotonic()
        rows = table_of_optima(AnalyticParams(n=12), range(2, 13))
        elapsed = time.monotonic() - t0
        r_pen = [r.r_penalty for r in rows]
        r_roll = [r.r_rollback for r in rows]
        assert all(b > a for a, b in zip(r_pen, r_pen[1:]))
        assert all(b > a for a, b in zip(r_roll, r_roll[1:]))
        for row in rows:
            assert row.r_penalty >= row.r_rollback
        assert elapsed < 1.0

    def test_factors_match_reference_within_absolute_tolerance(self, optima):
        """Known red for N >= 9.  The reference's factor columns were fitted
        against its expected-window column (14.9 .. 200.5), which is
        inconsistent with the optimal windows its own throughput condition
        yields (12.4 .. 100.0, matching the fixed-window column).  Solving
        against the reproducible optimal window gives factors up to 0.23
        below the reference at N=12, outside the +/-0.15 band, though all
        within 15% relative."""
        failures = []
        for row in optima:
            ref_pen, ref_roll = REFERENCE_OPTIMA[row.n]
            if abs(row.r_penalty - ref_pen) > 0.15:
                failures.append(
                    f"N={row.n} penalty {row.r_penalty:.3f} vs {ref_pen}"
                )
            if abs(row.r_rollback - ref_roll) > 0.15:
                failures.append(
                    f"N={row.n} rollback {row.r_rollback:.3f} vs {ref_roll}"
                )
        assert not failures, "; ".join(failures)

    def test_factors_match_reference_within_relative_envelope(self, optima):
        for row in optima:
            ref_pen, ref_roll = REFERENCE_OPTIMA[row.n]
            assert abs(row.r_penalty - ref_pen) / ref_pen <= 0.15
            assert abs(row.r_rollback - ref_roll) / ref_roll <= 0.15


class TestThroughputOptimum:
    def test_neighbor_and_grid_oracle(self):
        t0 = time.monotonic()
        for n in (2, 6, 12):
            p = AnalyticParams(n=n)
            pt = solve_optimal_pt(p)
            f_opt = throughput(probabilities_from_pt(pt, n), p)
            for h in (1e-5, 1e-4, 1e-3):
                for cand in (pt - h, pt + h):
                    assert f_opt >= throughput(
                        probabilities_from_pt(cand, n), p
                    )
            grid = np.arange(1e-5, 0.2, 1e-5)
            p_n = (1 - grid) ** n
            p_s = n * grid * (1 - grid) ** (n - 1)
            p_c = 1 - p_s - p_n
            f = p.payload_bytes * p_s / (
                p_s * p.t_s + p_c * p.t_c + p_n * p.t_n
            )
            assert f.max() <= f_opt * (1 + 1e-9)
        assert time.monotonic() - t0 < 5.0


class TestClosedFormLimits:
    @pytest.mark.parametrize("r", [1.1, 1.5, 2.0, 2.6])
    def test_collisionless_limits(self, r):
        p = AnalyticParams(n=12)
        w = p.cw_min - 1
        assert expected_cw_penalty(r, 1e-12, p) == pytest.approx(
            w * (1 + r**6) / 4, rel=1e-9
        )
        assert expected_cw_rollback(r, 1e-12, p) == pytest.approx(
            w * r**6 / 2, rel=1e-9
        )


class TestCollisionTrend:
    def test_penalty_collides_less_than_standard(self, saturation_runs):
        std = [s["collision"] for s in saturation_runs["standard"]]
        pen = [s["collision"] for s in saturation_runs["penalty"]]
        for p, s in zip(pen, std):
            assert p < s
        assert median(pen) / median(std) <= 0.6
        assert saturation_runs["elapsed_s"] < 120.0

    def test_standard_rate_in_expected_envelope(self, saturation_runs):
        std = median(s["collision"] for s in saturation_runs["standard"])
        assert 0.2 <= std <= 0.45


class TestFairnessTrend:
    def test_tuned_protocols_are_short_term_fair(self, saturation_runs):
        std = [s["jain"] for s in saturation_runs["standard"]]
        for label in ("penalty", "rollback"):
            vals = [s["jain"] for s in saturation_runs[label]]
            assert median(vals) >= 0.9
            for v, s in zip(vals, std):
                assert v > s

    def test_aggressive_growth_degrades_standard_fairness(self, saturation_runs):
        r20 = median(s["jain"] for s in saturation_runs["standard"])
        r26 = median(
            s["jain"] for s in saturation_runs["standard_aggressive"]
        )
        assert r26 <= r20


class TestHiddenTerminalTrend:
    @staticmethod
    def hidden_jain(kind, r, seed=1):
        cfg = ScenarioConfig(
            n_stations=2,
            policies=(BackoffPolicy(kind=kind, r=r),) * 2,
            duration_slots=400_000,
            sensing=((True, False), (False, True)),
            power_dbm=(10.0, 0.0),
            capture_threshold_db=5.0,
            seed=seed,
        )
        res = run(cfg)
        series = jain_fairness(trace_from_sim(res, cfg), 2, 50)
        return median(series)

    def test_moderate_penalty_beats_standard_and_tiny_factor(self):
        std = self.hidden_jain(PolicyKind.STANDARD, 2.0)
        pen_17 = self.hidden_jain(PolicyKind.PENALTY, 1.7)
        pen_12 = self.hidden_jain(PolicyKind.PENALTY, 1.2)
        assert pen_17 >= std
        assert pen_17 > pen_12


class TestMaskedDrawUniformity:
    @pytest.mark.parametrize("cw", [15, 21, 100, 1023])
    def test_chi_square_at_one_permille(self, cw):
        rng = Word16Source(2024 + cw)
        counts = np.zeros(cw + 1, dtype=np.int64)
        for _ in range(1_000_000):
            counts[draw_backoff(cw, rng)] += 1
        _, p_value = chisquare(counts)
        assert p_value > 0.001

    def test_doubling_table_is_exact(self):
        table = build_cw_table(BackoffPolicy(kind=PolicyKind.STANDARD, r=2.0))
        assert table.windows == (15, 31, 63, 127, 255, 511, 1023)


class TestEstimatorSuite:
    def test_ratio_reference_cases(self):
        cfg = EstimatorConfig(kind="ratio", n_assoc=4)
        from backoff_lab.adapt import estimate_ratio

        assert estimate_ratio([0.4, 0.4, 0.1, 0.1], cfg) == 2
        assert estimate_ratio([0.4, 0.4, 0.15, 0.15], cfg) == 3
        assert estimate_ratio([0.25] * 4, cfg) == 4

    def test_threshold_reference_cases(self):
        from backoff_lab.adapt import estimate_threshold

        cfg = EstimatorConfig(kind="threshold", n_assoc=4, tau_threshold=0.1)
        assert estimate_threshold([0.3, 0.2, 0.05, 0.0], cfg) == 2
        high = EstimatorConfig(kind="threshold", n_assoc=2, tau_threshold=0.9)
        assert estimate_threshold([0.1, 0.1], high) == 1

    def test_ratio_scale_invariance_over_random_vectors(self):
        from backoff_lab.adapt import estimate_ratio

        rnd = random.Random(7)
        for _ in range(1000):
            n = rnd.randint(2, 12)
            shares = [rnd.random() for _ in range(n)]
            scale = 10 ** rnd.uniform(-2, 2)
            cfg = EstimatorConfig(kind="ratio", n_assoc=n)
            assert estimate_ratio(shares, cfg) == estimate_ratio(
                [s * scale for s in shares], cfg
            )


class TestPipelineIntegrity:
    def test_simulator_reruns_are_byte_identical(self):
        cfg = uniform_scenario(
            BackoffPolicy(kind=PolicyKind.STANDARD, r=2.0), 4, 100_000, seed=3
        )
        assert "\n".join(trace_lines(run(cfg))) == "\n".join(
            trace_lines(run(cfg))
        )

    def test_jain_bounds_on_random_traces(self):
        rnd = random.Random(11)
        for _ in range(1000):
            n = rnd.randint(2, 6)
            length = rnd.randint(2 * n, 8 * n)
            entries = tuple(
                LogEntry(float(i), rnd.randrange(n), Outcome.SUCCESS, 0, 15, 1540)
                for i in range(length)
            )
            trace = AlignedTrace(entries=entries, bin_edges=(0.0, 1e6))
            for v in jain_fairness(trace, n, 2 * n):
                assert 1 / n - 1e-12 <= v <= 1 + 1e-12

    def test_binning_conserves_delivered_bytes(self):
        cfg = uniform_scenario(
            BackoffPolicy(kind=PolicyKind.STANDARD, r=2.0), 3, 300_000, seed=9
        )
        res = run(cfg)
        trace = trace_from_sim(res, cfg)
        rows, _ = throughput_per_bin(trace)
        edges = trace.bin_edges
        binned = sum(v * (edges[k + 1] - edges[k]) * 1e-6 for k, v in rows)
        horizon = edges[-1]
        delivered = sum(
            e.payload_bytes for e in trace.entries
            if e.outcome is Outcome.SUCCESS and e.t_us < horizon
        )
        assert binned == pytest.approx(delivered)

    def test_truncation_equals_brute_force_on_staggered_trace(self):
        rnd = random.Random(5)
        for _ in range(50):
            entries = []
            for station in range(3):
                start = rnd.uniform(0, 50_000)
                for k in range(rnd.randint(2, 10)):
                    entries.append(
                        LogEntry(start + k * rnd.uniform(100, 5_000), station,
                                 Outcome.SUCCESS, 0, 15, 1540)
                    )
            entries.sort(key=lambda e: e.t_us)
            trace = AlignedTrace(entries=tuple(entries),
                                 bin_edges=(0.0, 100_000.0))
            lo = max(
                min(e.t_us for e in entries if e.station == s) for s in range(3)
            )
            hi = min(
                max(e.t_us for e in entries if e.station == s) for s in range(3)
            )
            if hi < lo:
                with pytest.raises(Exception):
                    truncate_all_active(trace, 3)
                continue
            out = truncate_all_active(trace, 3)
            assert list(out.entries) == [
                e for e in entries if lo <= e.t_us <= hi
            ]


class TestAdaptiveLoop:
    BUDGET_FRAMES = 30_000

    @staticmethod
    def scenario(kind, r, seed):
        return ScenarioConfig(
            n_stations=12,
            policies=(
                BackoffPolicy(kind=kind, r=r,
                              penalty_semantics=PenaltySemantics.MARKOV),
            ) * 12,
            duration_slots=2_000_000,
            collision_slots=36,  # measured collision airtime ~= success airtime
            seed=seed,
            onoff_period_slots=100_000,
            onoff_stations=frozenset(range(6, 12)),
        )

    @classmethod
    def slots_to_budget(cls, res):
        delivered = 0
        for e in res.events:
            if e.outcome is Outcome.SUCCESS:
                delivered += 1
                if delivered >= cls.BUDGET_FRAMES:
                    return e.slot
        return None

    def test_ratio_adaptation_beats_static_standard(self, optima):
        adaptive, static = [], []
        for seed in SEEDS:
            ctrl = AdaptController(
                EstimatorConfig(kind="ratio", n_assoc=12), optima,
                interval_slots=25_000,
            )
            res = run_adaptive(
                self.scenario(PolicyKind.PENALTY, 1.7, seed), ctrl
            )
            adaptive.append(self.slots_to_budget(res))
            static.append(
                self.slots_to_budget(
                    run(self.scenario(PolicyKind.STANDARD, 2.0, seed))
                )
            )
        assert all(a is not None and s is not None
                   for a, s in zip(adaptive, static))
        assert median(adaptive) < median(static)

    def test_steady_traffic_emits_at_most_one_update(self, optima):
        for seed in (1, 2, 3):
            ctrl = AdaptController(
                EstimatorConfig(kind="ratio", n_assoc=12), optima,
                interval_slots=250_000,
            )
            cfg = ScenarioConfig(
                n_stations=12,
                policies=(
                    BackoffPolicy(kind=PolicyKind.PENALTY, r=1.7,
                                  penalty_semantics=PenaltySemantics.MARKOV),
                ) * 12,
                duration_slots=1_000_000,
                collision_slots=36,
                seed=seed,
            )
            res = run(cfg, controller=ctrl)
            # zero traffic-phase changes: initial broadcast only
            assert len(res.updates) <= 1
