"""Command-line front end.

Subcommands: simulate (run a scenario, optionally a backoff-factor sweep),
solve (optimal-factor table), metrics (measurement pipeline over a trace)
and adapt (run the access-point adaptation loop plus a fixed-factor
baseline for comparison).

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
The report path renders matplotlib figures next to each CSV; --no-plot
suppresses them.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from . import adapt as adapt_mod
from . import metrics as metrics_mod
from . import plots
from . import sim
from .analytic import AnalyticParams, optima_csv_lines, parse_optima_csv, table_of_optima
from .config import (
    ConfigError,
    hash_text,
    load_experiment,
    write_atomic,
    write_csv,
)
from .core import BackoffPolicy, PolicyKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_n_range(raw: str) -> list[int]:
    """'2..12' or a comma list '2,6,12'."""
    raw = raw.strip()
    if ".." in raw:
        lo, _, hi = raw.partition("..")
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty range {raw!r}")
        return list(range(lo, hi + 1))
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_summary(out: str, fmt: str, summary: dict, cfg_hash: str):
    if fmt == "json":
        summary = dict(summary, config_hash=cfg_hash)
        write_atomic(os.path.join(out, "summary.json"),
                     json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        lines = ["key,value"]
        lines.append(f"elapsed_slots,{summary['elapsed_slots']}")
        lines.append(
            f"aggregate_throughput_mbps,{summary['aggregate_throughput_mbps']:.6f}"
        )
        lines.append(f"n_updates,{summary['n_updates']}")
        for row in summary["per_station"]:
            lines.append(
                f"station_{row['station']},"
                f"{row['successes']}/{row['failures']}/{row['discards']}"
            )
        write_csv(os.path.join(out, "summary.csv"), lines, cfg_hash)


def cmd_simulate(args) -> int:
    spec = load_experiment(args.config, seed_override=args.seed)
    out = _ensure_out(args.out)
    cfg_hash = spec.config_hash

    result = sim.run(spec.scenario)
    write_csv(os.path.join(out, "trace.csv"), sim.trace_lines(result), cfg_hash)
    _write_summary(out, args.format, sim.summary_dict(result, spec.scenario), cfg_hash)

    if spec.sweep_r:
        # one worker per backoff factor; each run builds its own state
        with ThreadPoolExecutor(max_workers=min(8, len(spec.sweep_r))) as pool:
            row_lists = list(
                pool.map(
                    lambda r: sim.sweep_r(spec.scenario, [r]),
                    spec.sweep_r,
                )
            )
        rows = [row for rows_ in row_lists for row in rows_]
        lines = ["r,aggregate_throughput_mbps,jain_index,collision_fraction"]
        for row in rows:
            lines.append(
                f"{row.r:.4f},{row.aggregate_throughput_mbps:.6f},"
                f"{row.jain_index:.6f},{row.collision_fraction:.6f}"
            )
        write_csv(os.path.join(out, "sweep.csv"), lines, cfg_hash)
        if args.plot:
            plots.plot_sweep(rows, os.path.join(out, "sweep.png"))
    return EXIT_OK


def cmd_solve(args) -> int:
    n_values = _parse_n_range(args.n)
    params = AnalyticParams(
        n=max(n_values),
        t_s=args.ts,
        t_c=args.tc,
        t_n=args.tn,
        payload_bytes=args.payload,
    )
    rows = table_of_optima(params, n_values)
    out = _ensure_out(args.out)
    cfg_hash = hash_text(
        f"solve n={args.n} ts={args.ts} tc={args.tc} tn={args.tn} "
        f"payload={args.payload}"
    )
    write_csv(os.path.join(out, "optima.csv"), optima_csv_lines(rows), cfg_hash)
    if args.plot:
        plots.plot_optima(rows, os.path.join(out, "optima.png"))
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        with open(args.trace, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read trace {args.trace}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    events = sim.parse_trace(text)
    if not events:
        print("error: trace has no events", file=sys.stderr)
        return EXIT_CONFIG
    n = args.n if args.n_int is None else args.n_int
    trace = metrics_mod.trace_from_events(events, slot_us=args.slot_us)
    out = _ensure_out(args.out)
    cfg_hash = hash_text(text)

    w = args.window if args.window is not None else 10 * n
    series = metrics_mod.jain_fairness(trace, n, w)
    lines = ["window_start,jain"]
    for i, v in enumerate(series):
        lines.append(f"{i},{v:.6f}")
    write_csv(os.path.join(out, "jain.csv"), lines, cfg_hash)

    lines = ["mode,rate"]
    for mode in ("all_retries", "packets_with_retry"):
        lines.append(f"{mode},{metrics_mod.collision_rate(trace, mode):.6f}")
    write_csv(os.path.join(out, "collisions.csv"), lines, cfg_hash)

    rows, median = metrics_mod.throughput_per_bin(trace)
    lines = ["bin,throughput_bytes_per_s"]
    for k, v in rows:
        lines.append(f"{k},{v:.3f}")
    lines.append(f"median,{median:.3f}")
    write_csv(os.path.join(out, "throughput.csv"), lines, cfg_hash)

    stats = metrics_mod.bin_stats(trace, n)
    lines = ["bin,station,successes,failures"]
    for s in stats:
        lines.append(f"{s.bin},{s.station},{s.successes},{s.failures}")
    write_csv(os.path.join(out, "bins.csv"), lines, cfg_hash)

    summary = {
        "config_hash": cfg_hash,
        "events": len(events),
        "jain_windows": len(series),
        "jain_median": sim._median(series) if series else None,
        "collision_rate_all_retries": metrics_mod.collision_rate(trace),
        "throughput_median_bytes_per_s": median,
    }
    write_atomic(os.path.join(out, "summary.json"),
                 json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if args.plot:
        plots.plot_jain_series(series, w, os.path.join(out, "jain.png"))
        plots.plot_throughput_bins(rows, os.path.join(out, "throughput.png"))
    return EXIT_OK


def cmd_adapt(args) -> int:
    spec = load_experiment(args.config, seed_override=args.seed)
    if spec.adapt is None:
        raise ConfigError("adapt subcommand needs an [adapt] section")
    out = _ensure_out(args.out)
    cfg_hash = spec.config_hash

    adapt_spec = spec.adapt
    estimator = adapt_spec.estimator
    if args.estimator is not None or args.epsilon is not None or args.tau is not None:
        estimator = adapt_mod.EstimatorConfig(
            kind=args.estimator or estimator.kind,
            n_assoc=estimator.n_assoc,
            tau_threshold=args.tau if args.tau is not None else estimator.tau_threshold,
            epsilon=args.epsilon if args.epsilon is not None else estimator.epsilon,
        )
    if adapt_spec.optima_csv:
        with open(adapt_spec.optima_csv, encoding="utf-8") as fh:
            optima = parse_optima_csv(fh.read())
    else:
        optima = table_of_optima(
            AnalyticParams(n=max(2, estimator.n_assoc)),
            range(2, max(3, estimator.n_assoc + 1)),
        )
    controller = adapt_mod.AdaptController(
        estimator=estimator,
        optima=optima,
        interval_slots=adapt_spec.interval_slots,
    )
    result = sim.run_adaptive(spec.scenario, controller)
    write_csv(os.path.join(out, "trace.csv"), sim.trace_lines(result), cfg_hash)
    write_csv(os.path.join(out, "updates.csv"),
              adapt_mod.update_log_lines(result.updates), cfg_hash)
    _write_summary(out, args.format, sim.summary_dict(result, spec.scenario), cfg_hash)

    # fixed-factor baseline on the same scenario for a paired comparison
    baseline_cfg = replace(
        spec.scenario,
        policies=tuple(
            BackoffPolicy(kind=PolicyKind.STANDARD, r=2.0)
            for _ in range(spec.scenario.n_stations)
        ),
    )
    baseline = sim.run(baseline_cfg)
    lines = ["mode,successes,bytes_delivered,throughput_mbps,updates"]
    for mode, res, cfg in (
        ("adaptive", result, spec.scenario),
        ("standard_r2.0", baseline, baseline_cfg),
    ):
        succ = sum(c.successes for c in res.per_station)
        lines.append(
            f"{mode},{succ},{succ * cfg.payload_bytes},"
            f"{res.aggregate_throughput_mbps(cfg.slot_us):.6f},{len(res.updates)}"
        )
    write_csv(os.path.join(out, "comparison.csv"), lines, cfg_hash)
    if args.plot:
        plots.plot_update_log(result.updates, os.path.join(out, "updates.png"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="backoff-lab",
        description="Backoff-protocol laboratory: simulator, solver, metrics "
                    "and access-point adaptation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--no-plot", dest="plot", action="store_false",
                        help="skip figure rendering")

    sp = sub.add_parser("simulate", help="run a scenario (and optional r sweep)")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None)
    common(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("solve", help="emit the optimal-factor table")
    sp.add_argument("--n", default="2..12", help="station range, e.g. 2..12 or 2,6,12")
    sp.add_argument("--ts", type=float, default=3.22e-4, help="success airtime (s)")
    sp.add_argument("--tc", type=float, default=2.92e-4, help="collision airtime (s)")
    sp.add_argument("--tn", type=float, default=9e-6, help="idle slot (s)")
    sp.add_argument("--payload", type=int, default=1540, help="payload bytes")
    common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("metrics", help="measurement pipeline over a trace file")
    sp.add_argument("trace", help="trace CSV from simulate")
    sp.add_argument("--n", dest="n_int", type=int, required=True,
                    help="number of stations in the trace")
    sp.add_argument("--window", type=int, default=None,
                    help="Jain sliding window (default 10*n)")
    sp.add_argument("--slot-us", type=float, default=9.0)
    common(sp)
    sp.set_defaults(fn=cmd_metrics, n=None)

    sp = sub.add_parser("adapt", help="adaptation loop plus fixed-factor baseline")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--estimator", choices=("threshold", "ratio"), default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--tau", type=float, default=None)
    common(sp)
    sp.set_defaults(fn=cmd_adapt)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
