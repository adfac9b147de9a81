"""Experiment configuration files and provenance-stamped output.

Configs are INI-style text with a [scenario] section plus optional [sweep]
and [adapt] sections.  Parsing is strict: an unknown section or key is an
error that names the offender, because a silently ignored typo is worse
than a refusal to run.

Every emitted file starts with a `#config-hash: <sha256 prefix>` comment so
results can be traced back to the exact configuration that produced them.
Writes go through a temp file in the target directory plus an atomic rename.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
import tempfile
from dataclasses import dataclass

from .adapt import EstimatorConfig
from .core import BackoffPolicy, PenaltySemantics, PolicyKind
from .sim import ScenarioConfig


class ConfigError(ValueError):
    pass


_SCENARIO_KEYS = {
    "n_stations",
    "policy",
    "policies",
    "r",
    "fixed_cw",
    "penalty_semantics",
    "duration_slots",
    "slot_us",
    "tx_slots",
    "collision_slots",
    "loss_prob",
    "seed",
    "payload_bytes",
    "capture_threshold_db",
    "power_dbm",
    "hidden_pairs",
    "onoff_period_slots",
    "onoff_stations",
}

_SWEEP_KEYS = {"r_values"}

_ADAPT_KEYS = {
    "estimator",
    "epsilon",
    "tau",
    "interval_slots",
    "n_assoc",
    "optima_csv",
}

_SECTIONS = {
    "scenario": _SCENARIO_KEYS,
    "sweep": _SWEEP_KEYS,
    "adapt": _ADAPT_KEYS,
}


@dataclass(frozen=True)
class AdaptSpec:
    estimator: EstimatorConfig
    interval_slots: int
    optima_csv: str | None


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig
    sweep_r: tuple[float, ...] | None
    adapt: AdaptSpec | None
    source_text: str

    @property
    def config_hash(self) -> str:
        return hash_text(self.source_text)


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parse_policy(token: str, default_r: float, fixed_cw: int,
                  semantics: PenaltySemantics) -> BackoffPolicy:
    """Parse 'standard' or 'penalty:1.7' style policy tokens."""
    name, _, arg = token.strip().partition(":")
    try:
        kind = PolicyKind(name)
    except ValueError:
        raise ConfigError(f"scenario: unknown policy {name!r}") from None
    r = default_r
    cw = fixed_cw
    if arg:
        if kind is PolicyKind.FIXED_CW:
            cw = int(arg)
        else:
            r = float(arg)
    try:
        return BackoffPolicy(kind=kind, r=r, fixed_cw=cw,
                             penalty_semantics=semantics)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from None


def _int_list(raw: str) -> list[int]:
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def _pairs(raw: str) -> list[tuple[int, int]]:
    out = []
    for tok in raw.split(","):
        tok = tok.strip()
        if not tok:
            continue
        a, _, b = tok.partition("-")
        out.append((int(a), int(b)))
    return out


def parse_experiment(text: str, seed_override: int | None = None) -> ExperimentSpec:
    """Parse and validate an experiment config; raises ConfigError with the
    offending section/key named."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from None

    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    if "scenario" not in cp:
        raise ConfigError("missing [scenario] section")

    sc = cp["scenario"]
    try:
        n = sc.getint("n_stations")
        if n is None:
            raise ConfigError("scenario: n_stations is required")
        duration = sc.getint("duration_slots")
        if duration is None:
            raise ConfigError("scenario: duration_slots is required")
        semantics = PenaltySemantics(sc.get("penalty_semantics", "firmware"))
        default_r = sc.getfloat("r", 2.0)
        fixed_cw = sc.getint("fixed_cw", 15)
        if "policies" in sc:
            tokens = [t for t in sc["policies"].split(";") if t.strip()]
            if len(tokens) != n:
                raise ConfigError(
                    f"scenario: policies lists {len(tokens)} entries for "
                    f"{n} stations"
                )
            policies = tuple(
                _parse_policy(t, default_r, fixed_cw, semantics) for t in tokens
            )
        else:
            policies = (
                _parse_policy(sc.get("policy", "standard"), default_r,
                              fixed_cw, semantics),
            ) * n

        sensing = None
        if "hidden_pairs" in sc:
            matrix = [[True] * n for _ in range(n)]
            for a, b in _pairs(sc["hidden_pairs"]):
                if not (0 <= a < n and 0 <= b < n) or a == b:
                    raise ConfigError(f"scenario: bad hidden pair {a}-{b}")
                matrix[a][b] = matrix[b][a] = False
            sensing = tuple(tuple(row) for row in matrix)

        power = None
        if "power_dbm" in sc:
            power = tuple(float(t) for t in sc["power_dbm"].split(","))

        onoff_period = sc.getint("onoff_period_slots", fallback=None)
        onoff_stations = frozenset(_int_list(sc.get("onoff_stations", "")))

        scenario = ScenarioConfig(
            n_stations=n,
            policies=policies,
            duration_slots=duration,
            slot_us=sc.getfloat("slot_us", 9.0),
            tx_slots=sc.getint("tx_slots", 36),
            collision_slots=sc.getint("collision_slots", 32),
            loss_prob=sc.getfloat("loss_prob", 0.0),
            sensing=sensing,
            power_dbm=power,
            capture_threshold_db=float(sc.get("capture_threshold_db", "inf")),
            seed=seed_override if seed_override is not None else sc.getint("seed", 1),
            payload_bytes=sc.getint("payload_bytes", 1540),
            onoff_period_slots=onoff_period,
            onoff_stations=onoff_stations,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"scenario: {exc}") from None

    sweep_r = None
    if "sweep" in cp:
        try:
            sweep_r = tuple(
                float(t) for t in cp["sweep"].get("r_values", "").split(",")
                if t.strip()
            )
        except ValueError as exc:
            raise ConfigError(f"sweep: {exc}") from None
        if not sweep_r:
            raise ConfigError("sweep: r_values is required")
        for r in sweep_r:
            if not 1.0 <= r <= 4.0:
                raise ConfigError(f"sweep: r_values entry {r} outside [1.0, 4.0]")

    adapt = None
    if "adapt" in cp:
        ad = cp["adapt"]
        try:
            kind = ad.get("estimator")
            if kind is None:
                raise ConfigError("adapt: estimator is required")
            interval = ad.getint("interval_slots")
            if interval is None:
                raise ConfigError("adapt: interval_slots is required")
            estimator = EstimatorConfig(
                kind=kind,
                n_assoc=ad.getint("n_assoc", n),
                tau_threshold=ad.getfloat("tau", fallback=None),
                epsilon=ad.getfloat("epsilon", 0.8),
            )
            adapt = AdaptSpec(
                estimator=estimator,
                interval_slots=interval,
                optima_csv=ad.get("optima_csv", fallback=None),
            )
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"adapt: {exc}") from None

    if not math.isfinite(scenario.slot_us) or scenario.slot_us <= 0:
        raise ConfigError("scenario: slot_us must be positive and finite")
    return ExperimentSpec(
        scenario=scenario, sweep_r=sweep_r, adapt=adapt, source_text=text
    )


def load_experiment(path: str, seed_override: int | None = None) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_experiment(text, seed_override=seed_override)


def write_atomic(path: str, text: str):
    """Write via temp file + rename so readers never see a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_csv(path: str, lines: list[str], config_hash: str):
    """CSV file: provenance comment first, then the header and data rows."""
    body = "\n".join([f"#config-hash: {config_hash}", *lines]) + "\n"
    write_atomic(path, body)
