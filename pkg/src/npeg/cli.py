"""Command-line entry point, config parsing and run-record serialization.

Usage: ``npeg <subcommand> [--config FILE] [flags]``. Config files hold flat
``key = value`` lines (keys are the long flag names without dashes prefix,
``#`` starts a comment). A ``subcommand = NAME`` line lets ``npeg --config FILE``
run without naming the subcommand. Flags override file values; defaults fill
the rest.

Exit codes: 0 success, 2 configuration error, 3 unresolved numerical
derivative, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from . import __version__
from .dynamics import BlochState, bloch_trajectory, default_time_grid, evolve_effective, full_time_series
from .effective import build_effective_model
from .experiments import (
    ScanRecord,
    compare_full_vs_effective,
    compensation_scan,
    default_delta_tbm,
    fisher_map,
    resolvability_study,
    robustness_traces,
    scaling_study,
    time_cost_record,
)
from .fisher import DerivativeResolutionError, Tolerances
from .fock import ModelParams

log = logging.getLogger("npeg")

SCHEMA_VERSION = 1
JSON_KEYS = ("config", "columns", "rows", "provenance", "schema_version")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("simulate", "fisher-map", "robustness", "compensation-scan", "compare", "scaling", "time-cost")
DEFAULT_D = 20.0
DEFAULT_N = 4


class ConfigError(ValueError):
    pass


# key -> (kind, default); kinds: int, float, str:<choices>, range, floats, ints
_COMMON = {
    "n": ("int", DEFAULT_N),
    "u": ("float", 1.0),
    "j": ("float", None),
    "d": ("float", None),
    "delta0": ("float", 0.0),
    "output": ("path", None),
    "format": ("str:csv,json", "csv"),
    "fd-step": ("float", Tolerances.fd_step_rel),
    "richardson-tol": ("float", Tolerances.richardson_tol),
    "prob-floor": ("float", Tolerances.prob_floor),
    "deriv-floor": ("float", Tolerances.deriv_floor),
}
_TWO_PI = 2 * math.pi
_SPECIFIC = {
    "simulate": {
        "model": ("str:effective,full", "effective"),
        "theta": ("float", math.pi / 2),
        "phi": ("float", 0.0),
        "times": ("range", None),
        "jeff-sign": ("int", 1),
    },
    "fisher-map": {
        "gamma-range": ("range", [-4.0, 4.0, 81]),
        "omega-t-range": ("range", [0.05, _TWO_PI - 0.05, 81]),
    },
    "robustness": {
        "theta-over-pi": ("floats", [0.1, 0.2, 0.3, 0.5]),
        "omega-t-range": ("range", [0.05, _TWO_PI - 0.05, 201]),
    },
    "compensation-scan": {
        "delta-tbm": ("float", None),
        "cmp-range": ("range", None),
        "cmp-sign": ("int", 1),
        "n-values": ("ints", None),
        "gamma-range": ("range", [-4.0, 4.0, 81]),
    },
    "compare": {
        "gamma-range": ("range", None),
    },
    "scaling": {
        "n-min": ("int", 1),
        "n-max": ("int", 8),
    },
    "time-cost": {
        "m1": ("float", 1.0),
    },
}


def _keys_for(sub):
    keys = dict(_COMMON)
    keys.update(_SPECIFIC[sub])
    return keys


def _dest(key):
    return key.replace("-", "_")


@dataclass
class RunConfig:
    subcommand: str
    n_bosons: int
    interaction_u: float
    hopping_j: float
    delta0: float
    options: dict = field(default_factory=dict)
    output: Optional[str] = None
    fmt: str = "csv"
    tolerances: dict = field(default_factory=dict)

    @property
    def d_ratio(self) -> float:
        return self.interaction_u / self.hopping_j

    def params(self) -> ModelParams:
        return ModelParams(self.n_bosons, self.interaction_u, self.hopping_j, self.delta0)

    def tol(self) -> Tolerances:
        return Tolerances(**self.tolerances)

    def as_dict(self) -> dict:
        return {"subcommand": self.subcommand, "n_bosons": self.n_bosons,
                "interaction_u": self.interaction_u, "hopping_j": self.hopping_j,
                "d_ratio": self.d_ratio, "delta0": self.delta0, "options": self.options,
                "output": self.output, "format": self.fmt, "tolerances": self.tolerances}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(data["subcommand"], data["n_bosons"], data["interaction_u"], data["hopping_j"],
                   data["delta0"], data.get("options", {}), data.get("output"),
                   data.get("format", "csv"), data.get("tolerances", {}))


@dataclass
class RunRecord:
    config: RunConfig
    scan: ScanRecord
    wall_clock_seconds: float
    timestamp: str
    schema_version: int = SCHEMA_VERSION


# ---------------------------------------------------------------------------
# parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _convert(key, kind, raw):
    """Turn a raw string (or list of strings) into a typed value."""
    tokens = raw if isinstance(raw, list) else str(raw).replace(",", " ").split()
    try:
        if kind in ("int", "float", "path") or kind.startswith("str:"):
            if len(tokens) != 1:
                raise ConfigError(f"{key}: expected a single value, got {raw!r}")
            tok = tokens[0]
            if kind == "int":
                value = float(tok)
                if value != int(value):
                    raise ValueError
                return int(value)
            if kind == "float":
                value = float(tok)
                if not math.isfinite(value):
                    raise ValueError
                return value
            if kind == "path":
                return tok
            choices = kind[4:].split(",")
            if tok not in choices:
                raise ConfigError(f"{key}: must be one of {choices}, got {tok!r}")
            return tok
        if kind == "range":
            if len(tokens) != 3:
                raise ConfigError(f"{key}: expected START STOP COUNT, got {raw!r}")
            start, stop = float(tokens[0]), float(tokens[1])
            count = float(tokens[2])
            if count != int(count) or not (math.isfinite(start) and math.isfinite(stop)):
                raise ValueError
            count = int(count)
            if count < 2:
                raise ConfigError(f"{key}: range count must be ≥ 2")
            if start == stop:
                raise ConfigError(f"{key}: range start and stop must differ")
            return [start, stop, count]
        if kind in ("floats", "ints"):
            if not tokens:
                raise ConfigError(f"{key}: expected at least one value")
            values = [float(t) for t in tokens]
            if kind == "ints":
                if any(v != int(v) for v in values):
                    raise ValueError
                return [int(v) for v in values]
            return values
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{key}: malformed number in {raw!r}") from None
    raise AssertionError(kind)


def parse_config_text(text: str, subcommand: str) -> dict:
    """Flat ``key = value`` text -> raw values keyed by flag name; unknown keys are errors."""
    keys = _keys_for(subcommand)
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key == "subcommand":
            if raw != subcommand:
                raise ConfigError(f"config line {lineno}: file is for {raw!r}, not {subcommand!r}")
            continue
        if key not in keys:
            raise ConfigError(f"config line {lineno}: unknown key {key!r} for {subcommand}")
        values[key] = _convert(key, keys[key][0], raw)
    return values


def _build_parser():
    parser = _Parser(prog="npeg", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="flat key = value config file")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value config file")
        for key, (kind, _default) in _keys_for(name).items():
            nargs = {"range": 3, "floats": "+", "ints": "+"}.get(kind)
            p.add_argument(f"--{key}", dest=_dest(key), default=argparse.SUPPRESS, nargs=nargs)
    return parser


def parse_config(argv=None, config_text: Optional[str] = None) -> RunConfig:
    """argv (and optionally config file text) -> validated RunConfig.

    Precedence: flags, then the config file (``config_text`` or ``--config``),
    then defaults.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    config_path = _peek_config_path(argv)
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                config_text = fh.read()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {config_path!r}: {exc.strerror}") from None
    if config_text is not None and (not argv or argv[0] not in SUBCOMMANDS):
        sub = _subcommand_in_text(config_text)
        if sub is not None:
            argv = [sub] + argv
    args = vars(_build_parser().parse_args(argv))
    sub = args.pop("subcommand")
    args.pop("config", None)
    keys = _keys_for(sub)
    merged = {}
    if config_text is not None:
        merged.update(parse_config_text(config_text, sub))
    for key, (kind, _) in keys.items():
        if _dest(key) in args:
            merged[key] = _convert(key, kind, args[_dest(key)])
    for key, (_, default) in keys.items():
        merged.setdefault(key, default)
    return _finalize(sub, merged)


def _peek_config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _subcommand_in_text(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        if "=" in line:
            key, raw = (s.strip() for s in line.split("=", 1))
            if key == "subcommand":
                return raw
    return None


def _finalize(sub, v) -> RunConfig:
    n = v["n"]
    if n < 1:
        raise ConfigError("n: n_bosons must be ≥ 1")
    u = v["u"]
    if u == 0:
        raise ConfigError("u: interaction_u must be nonzero")
    j, d = v["j"], v["d"]
    if j is not None and j == 0:
        raise ConfigError("j: hopping_j must be nonzero")
    if d is not None and d == 0:
        raise ConfigError("d: d ratio must be nonzero")
    if j is None:
        j = u / (d if d is not None else DEFAULT_D)
    elif d is not None and not math.isclose(u / j, d, rel_tol=1e-12):
        raise ConfigError(f"d: inconsistent with u/j = {u / j!r}")
    tolerances = {"fd_step_rel": v["fd-step"], "richardson_tol": v["richardson-tol"],
                  "prob_floor": v["prob-floor"], "deriv_floor": v["deriv-floor"]}
    for name, value in tolerances.items():
        if not value > 0:
            raise ConfigError(f"{name.replace('_', '-')}: tolerance must be positive")
    options = {_dest(k): v[k] for k in _SPECIFIC[sub]}
    if sub == "simulate":
        if not 0 <= options["theta"] <= math.pi:
            raise ConfigError("theta: must lie in [0, pi]")
        if options["jeff_sign"] not in (1, -1):
            raise ConfigError("jeff-sign: must be 1 or -1")
    if sub == "robustness":
        if v["delta0"] != 0:
            raise ConfigError("delta0: robustness traces require delta0 = 0")
        if any(not 0 < t < 1 for t in options["theta_over_pi"]):
            raise ConfigError("theta-over-pi: values must lie strictly inside (0, 1)")
    if sub == "compensation-scan":
        if options["cmp_sign"] not in (1, -1):
            raise ConfigError("cmp-sign: must be 1 or -1")
        if options["n_values"] is not None and min(options["n_values"]) < 1:
            raise ConfigError("n-values: n_bosons must be ≥ 1")
    if sub == "scaling":
        lo, hi = options["n_min"], options["n_max"]
        if lo < 1:
            raise ConfigError("n-min: n_bosons must be ≥ 1")
        if hi < lo or hi > 12:
            raise ConfigError("n-max: must satisfy n-min ≤ n-max ≤ 12")
    if sub == "time-cost":
        if not options["m1"] > 0:
            raise ConfigError("m1: must be positive")
        if not u / j > 0:
            raise ConfigError("d: time-cost requires d > 0")
    try:
        ModelParams(n, u, j, v["delta0"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(sub, n, u, j, v["delta0"], options, v["output"], v["format"], tolerances)


# ---------------------------------------------------------------------------
# running


def _grid(triple):
    start, stop, count = triple
    return np.linspace(start, stop, count)


def _threads_from_env() -> Optional[int]:
    raw = os.environ.get("NPEG_THREADS")
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        raise ConfigError(f"NPEG_THREADS: must be a positive integer, got {raw!r}")
    return value


def _simulate(cfg: RunConfig) -> ScanRecord:
    o = cfg.options
    params = cfg.params()
    model = build_effective_model(params, sign=o["jeff_sign"])
    if model.warning:
        log.warning(model.warning)
    times = _grid(o["times"]) if o["times"] is not None else default_time_grid(model)
    state = BlochState(o["theta"], o["phi"])
    inputs = {"params": params, "model": o["model"], "theta": state.theta, "phi": state.phi,
              "j_eff": model.j_eff, "gamma": model.gamma, "omega": model.omega}
    if o["model"] == "effective":
        series = evolve_effective(model, state, times)
        bloch = bloch_trajectory(model, state, times)
        rows = np.column_stack([times, model.omega * times, series.p_up, series.p_down, bloch])
        return ScanRecord("simulate", ("t", "omega_t", "p_up", "p_down", "bloch_x", "bloch_y", "bloch_z"),
                          rows.tolist(), inputs=inputs)
    series = full_time_series(params, state.to_fock(params.n_bosons), times)
    rows = np.column_stack([times, model.omega * times, series.p_up, series.p_down, series.leakage])
    return ScanRecord("simulate", ("t", "omega_t", "p_up", "p_down", "leakage"), rows.tolist(),
                      inputs=inputs, summary={"max_leakage": float(series.leakage.max())})


def _compensation(cfg: RunConfig) -> ScanRecord:
    o = cfg.options
    if o["n_values"]:
        return resolvability_study(o["n_values"], cfg.interaction_u, cfg.d_ratio,
                                   _grid(o["gamma_range"]), o["delta_tbm"])
    params = cfg.params()
    model = build_effective_model(params)
    delta_tbm = o["delta_tbm"] if o["delta_tbm"] is not None else default_delta_tbm(params)
    if o["cmp_range"] is not None:
        cmp_values = _grid(o["cmp_range"])
    else:
        # Gamma window [-4, 4] around zero total detuning
        n = params.n_bosons
        cmp_values = o["cmp_sign"] * (np.linspace(-4, 4, 161) * model.j_eff / n - delta_tbm)
    return compensation_scan(params, delta_tbm, cmp_values, cmp_sign=o["cmp_sign"])


def run(config: RunConfig) -> RunRecord:
    """Dispatch a validated config to its experiment."""
    started = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat()
    sub, o, tol = config.subcommand, config.options, config.tol()
    try:
        if sub == "simulate":
            scan = _simulate(config)
        elif sub == "fisher-map":
            model = build_effective_model(config.params().replace(delta0=0.0))
            scan = fisher_map(model, _grid(o["gamma_range"]), _grid(o["omega_t_range"]), tol)
        elif sub == "robustness":
            model = build_effective_model(config.params())
            scan = robustness_traces(model, [math.pi * t for t in o["theta_over_pi"]],
                                     _grid(o["omega_t_range"]), tol)
        elif sub == "compensation-scan":
            scan = _compensation(config)
        elif sub == "compare":
            gammas = _grid(o["gamma_range"]) if o["gamma_range"] is not None else None
            scan = compare_full_vs_effective(config.params(), gammas, tol, _threads_from_env())
        elif sub == "scaling":
            scan = scaling_study(config.interaction_u, config.d_ratio, range(o["n_min"], o["n_max"] + 1))
        elif sub == "time-cost":
            scan = time_cost_record(config.n_bosons, config.d_ratio, o["m1"], config.interaction_u)
        else:
            raise ConfigError(f"unknown subcommand {sub!r}")
    except DerivativeResolutionError as exc:
        raise DerivativeResolutionError(f"{sub}: {exc}") from exc
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{sub}: {exc}") from exc
    return RunRecord(config, scan, time.perf_counter() - started, stamp)


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def record_to_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(record.scan.columns)
    for row in record.scan.rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def read_csv(text: str):
    """CSV text -> (columns, rows of floats)."""
    reader = csv.reader(io.StringIO(text))
    columns = tuple(next(reader))
    rows = [tuple(float(x) for x in row) for row in reader if row]
    return columns, rows


def record_to_json(record: RunRecord, include_timing: bool = True) -> str:
    scan = record.scan
    provenance = {
        "experiment": scan.experiment,
        "engine_version": scan.engine_version,
        "inputs": scan.inputs,
        "summary": scan.summary,
        "tolerances": scan.tolerances,
    }
    if include_timing:
        provenance["timing"] = {"timestamp": record.timestamp,
                                "wall_clock_seconds": record.wall_clock_seconds}
    payload = {
        "config": record.config.as_dict(),
        "columns": list(scan.columns),
        "rows": [list(r) for r in scan.rows],
        "provenance": provenance,
        "schema_version": record.schema_version,
    }
    return json.dumps(payload, indent=1, sort_keys=False) + "\n"


def record_from_json(text: str) -> RunRecord:
    data = json.loads(text)
    missing = set(JSON_KEYS) - set(data)
    if missing:
        raise ValueError(f"run record is missing keys {sorted(missing)}")
    prov = data["provenance"]
    scan = ScanRecord(prov["experiment"], data["columns"], data["rows"], prov["inputs"],
                      prov["summary"], prov["tolerances"], prov["engine_version"])
    timing = prov.get("timing", {})
    return RunRecord(RunConfig.from_dict(data["config"]), scan,
                     timing.get("wall_clock_seconds", 0.0), timing.get("timestamp", ""),
                     data["schema_version"])


def emit(record: RunRecord, fmt: str = "csv", path: Optional[str] = None) -> None:
    """Write the record as CSV or JSON to ``path`` (stdout when None)."""
    if fmt == "csv":
        text = record_to_csv(record)
    elif fmt == "json":
        text = record_to_json(record)
    else:
        raise ConfigError(f"format: unknown output format {fmt!r}")
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        config = parse_config(argv)
        record = run(config)
    except ConfigError as exc:
        print(f"npeg: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DerivativeResolutionError as exc:
        print(f"npeg: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        emit(record, config.fmt, config.output)
    except OSError as exc:
        print(f"npeg: cannot write {config.output!r}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
