"""Experiment runner: single runs, parameter sweeps and threshold curves.

Configuration is a line-oriented key=value file with [section] headers; any
command-line flag overrides the file.  Sweeps take the Cartesian product of
the listed values, run every point over the replication seeds (optionally in
a worker pool), and persist per-point CSVs, an aggregate CSV and a JSON
manifest keyed by the resolved config hash.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .analysis import threshold_curve, threshold_curve_to_csv
from .correlation import CorrelationMetric
from .presets import DESK_THRESHOLDS
from .samples import SampleConfig
from .simulator import (
    Algo,
    RunConfig,
    RunReport,
    accuracy,
    config_hash,
    report_to_trial_csv,
    report_to_tti_csv,
    run,
)
from .static_stage import StaticConfig
from .topology import TrafficConfig, desk_traffic, full_traffic

OUTPUT_ENV = "DPRE_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration."""


#: sweepable parameter -> section it lives in
SWEEP_PARAMS = {
    "metric": "static",
    "alpha": "static",
    "xi": "static",
    "algo": "dynamic",
    "gamma": "dynamic",
    "n_res": "dynamic",
    "beta": "dynamic",
    "dynamics": "traffic",
    "interference": "traffic",
    "trials": "run",
}

_METRICS = {m.value: m for m in CorrelationMetric}
_ALGOS = {a.value: a for a in Algo}


@dataclass
class ExperimentSpec:
    base: dict                      # section -> {key: str}
    sweep: dict[str, list[str]]
    replications: int
    output_dir: Path
    workers: int = 1


def _as_float(raw: Mapping, key: str, default: float, lo=None, hi=None,
              lo_open: bool = False) -> float:
    try:
        value = float(raw.get(key, default))
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {raw.get(key)!r}") from None
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(f"{key}={value} out of range")
    if hi is not None and value > hi:
        raise ConfigError(f"{key}={value} out of range")
    return value


def _as_int(raw: Mapping, key: str, default: int, lo=None) -> int:
    try:
        value = int(raw.get(key, default))
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {raw.get(key)!r}") from None
    if lo is not None and value < lo:
        raise ConfigError(f"{key}={value} out of range")
    return value


def validate_config(raw: Mapping[str, Mapping[str, str]]) -> RunConfig:
    """Range-check a raw section map and fill documented defaults."""
    traffic_raw = dict(raw.get("traffic", {}))
    static_raw = dict(raw.get("static", {}))
    dynamic_raw = dict(raw.get("dynamic", {}))
    samples_raw = dict(raw.get("samples", {}))
    run_raw = dict(raw.get("run", {}))

    seed = _as_int(run_raw, "seed", 0)
    preset = traffic_raw.get("preset", "desk")
    dynamics = traffic_raw.get("dynamics", "high")
    interference = traffic_raw.get("interference", "high")
    if dynamics not in ("high", "low") or interference not in ("high", "low"):
        raise ConfigError("dynamics and interference must be 'high' or 'low'")
    builder = {"desk": desk_traffic, "table1": full_traffic}.get(preset)
    if builder is None:
        raise ConfigError(f"unknown traffic preset {preset!r}")
    overrides: dict = {}
    if "cells" in traffic_raw:
        overrides["cells"] = _as_int(traffic_raw, "cells", 3, lo=1)
    if "dwell" in traffic_raw:
        overrides["plate_dwell_ttis"] = _as_int(traffic_raw, "dwell", 40, lo=1)
    if "plate_gap" in traffic_raw:
        overrides["plate_gap_ttis"] = _as_int(traffic_raw, "plate_gap", 30, lo=0)
    if "jitter" in traffic_raw:
        overrides["trigger_jitter_ttis"] = _as_int(traffic_raw, "jitter", 4, lo=0)
    try:
        traffic = builder(dynamics, interference, seed=seed, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    metric_name = static_raw.get("metric", "X")
    if metric_name not in _METRICS:
        raise ConfigError(f"metric must be one of {sorted(_METRICS)}, got {metric_name!r}")
    metric = _METRICS[metric_name]
    thresholds = dict(DESK_THRESHOLDS)
    if "alpha" in static_raw:
        thresholds[metric] = _as_float(static_raw, "alpha", 50.0, lo=0.0)
    static = StaticConfig(thresholds=thresholds,
                          set_size=_as_int(static_raw, "xi", 8, lo=1))

    algo_name = dynamic_raw.get("algo", "DPre")
    if algo_name not in _ALGOS:
        raise ConfigError(f"algo must be one of {sorted(_ALGOS)}, got {algo_name!r}")
    gamma = _as_float(dynamic_raw, "gamma", 0.3, lo=0.0, hi=1.0)
    if gamma == 0.0:
        raise ConfigError(
            "gamma=0 is outside the exploration domain (0, 1]: the selection "
            "mix and the regret bounds both divide by gamma")

    samples = SampleConfig(
        time_window=_as_int(samples_raw, "time_window", 25, lo=1),
        distance_radius=_as_float(samples_raw, "distance_radius", 0.5, lo=0.0,
                                  lo_open=True),
        epoch_length=_as_int(samples_raw, "epoch_length", 30, lo=1),
        retention_epochs=_as_int(samples_raw, "retention", 4, lo=1),
    )

    return RunConfig(
        traffic=traffic,
        samples=samples,
        static=static,
        algo=_ALGOS[algo_name],
        metric=metric,
        n_res=_as_int(dynamic_raw, "n_res", 6, lo=0),
        gamma=gamma,
        beta=_as_float(dynamic_raw, "beta", 0.1, lo=0.0),
        n_trials=_as_int(run_raw, "trials", 60, lo=1),
        seed=seed,
        reservation_window=_as_int(dynamic_raw, "reservation_window", 10, lo=1),
        reservation_period=_as_int(dynamic_raw, "reservation_period", 5, lo=1),
        bootstrap_trials=_as_int(run_raw, "bootstrap", 120, lo=1),
        theta_window=_as_int(dynamic_raw, "theta_window", 1, lo=1),
    )


def read_config(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return {section: dict(parser[section]) for section in parser.sections()}


def apply_overrides(raw: dict, args: argparse.Namespace) -> dict:
    """Map CLI flags onto their config sections."""
    flag_map = {
        "gamma": ("dynamic", "gamma"),
        "n_res": ("dynamic", "n_res"),
        "algo": ("dynamic", "algo"),
        "xi": ("static", "xi"),
        "alpha": ("static", "alpha"),
        "metric": ("static", "metric"),
        "seed": ("run", "seed"),
        "trials": ("run", "trials"),
    }
    for flag, (section, key) in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            raw.setdefault(section, {})[key] = str(value)
    return raw


def parse_experiment(raw: dict, out_dir: Path, workers: int = 1) -> ExperimentSpec:
    sweep_raw = dict(raw.get("sweep", {}))
    replications = _as_int(sweep_raw, "replications", 1, lo=1)
    sweep_raw.pop("replications", None)
    sweep: dict[str, list[str]] = {}
    for key, values in sweep_raw.items():
        if key not in SWEEP_PARAMS:
            raise ConfigError(
                f"unknown sweep parameter {key!r}; valid: {sorted(SWEEP_PARAMS)}")
        sweep[key] = [v.strip() for v in str(values).split(",") if v.strip()]
        if not sweep[key]:
            raise ConfigError(f"sweep parameter {key!r} has no values")
    base = {s: dict(v) for s, v in raw.items() if s != "sweep"}
    return ExperimentSpec(base, sweep, replications, out_dir, workers)


def _grid(spec: ExperimentSpec) -> list[dict[str, str]]:
    points = [{}]
    for key in sorted(spec.sweep):
        points = [dict(p, **{key: v}) for p in points for v in spec.sweep[key]]
    return points


def _point_config(spec: ExperimentSpec, point: Mapping[str, str], seed: int) -> RunConfig:
    raw = {s: dict(v) for s, v in spec.base.items()}
    for key, value in point.items():
        raw.setdefault(SWEEP_PARAMS[key], {})[key] = value
    raw.setdefault("run", {})["seed"] = str(seed)
    return validate_config(raw)


def _point_label(point: Mapping[str, str]) -> str:
    if not point:
        return "base"
    return "__".join(f"{k}-{str(v).replace('.', 'p')}" for k, v in sorted(point.items()))


def _run_one(args) -> tuple:
    spec, point, seed = args
    cfg = _point_config(spec, point, seed)
    report = run(cfg)
    return point, seed, cfg, report


def run_experiment(spec: ExperimentSpec) -> Path:
    """Execute the sweep; returns the manifest path."""
    for point in _grid(spec):
        _point_config(spec, point, 0)  # validate the whole grid up front
    spec.output_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(spec, point, seed)
             for point in _grid(spec) for seed in range(spec.replications)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]

    by_point: dict[str, list[tuple[int, RunConfig, RunReport]]] = {}
    manifest_rows = []
    for point, seed, cfg, report in results:
        label = _point_label(point)
        by_point.setdefault(label, []).append((seed, cfg, report))
        csv_path = spec.output_dir / f"{label}__seed-{seed}.csv"
        report_to_trial_csv(report, csv_path)
        manifest_rows.append({
            "point": dict(point), "seed": seed,
            "config_hash": report.config_hash, "csv": csv_path.name,
        })

    agg_path = spec.output_dir / "aggregate.csv"
    _write_aggregate(by_point, agg_path)
    manifest = {
        "version": __version__,
        "numpy": np.__version__,
        "base": spec.base,
        "sweep": spec.sweep,
        "replications": spec.replications,
        "grid_hash": hashlib.sha256(
            json.dumps([spec.base, spec.sweep], sort_keys=True).encode()
        ).hexdigest()[:16],
        "runs": manifest_rows,
        "aggregate": agg_path.name,
    }
    manifest_path = spec.output_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path


def _write_aggregate(by_point, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point", "algo", "metric", "gamma", "trial",
                    "accuracy_mean", "accuracy_std",
                    "qos_accuracy_mean", "qos_accuracy_std",
                    "mean_latency_mean", "mean_utility_mean", "n_seeds"])
        for label in sorted(by_point):
            entries = sorted(by_point[label], key=lambda e: e[0])
            reports = [r for _, _, r in entries]
            cfg0 = entries[0][1]
            n_trials = len(reports[0].trials)
            acc = np.array([accuracy(r) for r in reports])
            qos = np.array([accuracy(r, qos_aware=True) for r in reports])
            lat = np.array([[t.mean_latency for t in r.trials] for r in reports])
            util = np.array([[t.mean_utility for t in r.trials] for r in reports])
            for trial in range(n_trials):
                w.writerow([
                    label, cfg0.algo.value, cfg0.metric.value, cfg0.gamma, trial,
                    f"{acc[:, trial].mean():.6f}",
                    f"{acc[:, trial].std(ddof=1) if len(reports) > 1 else 0.0:.6f}",
                    f"{qos[:, trial].mean():.6f}",
                    f"{qos[:, trial].std(ddof=1) if len(reports) > 1 else 0.0:.6f}",
                    f"{lat[:, trial].mean():.6f}",
                    f"{util[:, trial].mean():.6f}",
                    len(reports),
                ])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpre", description="predictive pre-allocation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key=value config file")
        p.add_argument("--gamma", type=float)
        p.add_argument("--n-res", dest="n_res", type=int)
        p.add_argument("--xi", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--metric", choices=sorted(_METRICS))
        p.add_argument("--algo", choices=sorted(_ALGOS))
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", type=Path,
                       default=Path(os.environ.get(OUTPUT_ENV, "out")))

    p_run = sub.add_parser("run", help="single simulation run")
    common(p_run)
    p_run.add_argument("--tti-log", action="store_true",
                       help="also write the per-TTI reservation log")

    p_sweep = sub.add_parser("sweep", help="grid sweep with replications")
    common(p_sweep)
    p_sweep.add_argument("--workers", type=int, default=1)

    p_thr = sub.add_parser("threshold-curve",
                           help="admission error ratios over an alpha sweep")
    common(p_thr)
    p_thr.add_argument("--alpha-max", type=float, default=None)
    p_thr.add_argument("--steps", type=int, default=60)
    p_thr.add_argument("--collect-trials", type=int, default=150)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        raw = read_config(args.config) if args.config else {}
        raw = apply_overrides(raw, args)
        out_dir: Path = args.out
        if args.command == "run":
            cfg = validate_config(raw)
            report = run(cfg)
            out_dir.mkdir(parents=True, exist_ok=True)
            report_to_trial_csv(report, out_dir / "trials.csv")
            if args.tti_log:
                report_to_tti_csv(report, out_dir / "tti_log.csv")
            print(f"run {report.config_hash}: "
                  f"mean accuracy {np.mean(accuracy(report)):.4f} "
                  f"-> {out_dir / 'trials.csv'}")
        elif args.command == "sweep":
            spec = parse_experiment(raw, out_dir, workers=args.workers)
            manifest = run_experiment(spec)
            print(f"sweep complete -> {manifest}")
        elif args.command == "threshold-curve":
            cfg = validate_config(raw)
            metric = cfg.metric
            if args.alpha_max is None:
                alpha_max = {"X": 400.0, "MI": 0.02, "P": 0.4}[metric.value]
            else:
                alpha_max = args.alpha_max
            alphas = np.linspace(0.0, alpha_max, args.steps)
            points = threshold_curve(cfg, args.collect_trials, alphas, metric)
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / f"threshold_{metric.value}.csv"
            threshold_curve_to_csv(points, metric, path, config_hash(cfg))
            print(f"threshold curve -> {path}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 3
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def console() -> None:
    raise SystemExit(main())
