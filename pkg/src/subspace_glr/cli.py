"""Command-line harness.

Subcommands:

    roc              H0/H1 trials, per-detector ROC and AUC tables
    pm-sweep         missed-detection probability along a swept parameter
    null-dist        null distribution of 2 log Lambda vs chi-squared(2)
    detect           score one snapshot file with optional thresholds
    validate-config  parse a config, print the resolved form

Exit codes: 0 success, 2 invalid config or input file, 3 numerical failure
above the configured tolerance. Logging level comes from SUBSPACE_GLR_LOG
(debug, info, warning, error).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .detectors import (
    DETECTOR_NAMES,
    DegenerateSampleError,
    compute_report,
)
from .covariance import sample_cov
from .dataio import read_snapshots, read_steering_csv
from .model import STEERING_MODES, ScenarioConfig
from .montecarlo import (
    SWEEP_AXES,
    ExperimentConfig,
    SweepSpec,
    resolve_threads,
    run_null_dist,
    run_pm_sweep,
    run_roc_experiment,
)
from .optimizer import TrustRegionOptions

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


def _require(d: dict, key: str, types, where: str, default=None, required: bool = False):
    if key not in d:
        if required:
            raise ConfigError(f"{where}.{key}: required field is missing")
        return default
    val = d[key]
    if types is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, types) or isinstance(val, bool) and types is not bool:
        raise ConfigError(f"{where}.{key}: expected {getattr(types, '__name__', types)}, got {val!r}")
    return val


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")


def scenario_from_dict(d: dict, where: str = "scenario") -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    _reject_unknown(d, {"L", "N", "snr_s_db", "snr_r_db", "sigma_x2", "wishart_dof", "seed"}, where)
    try:
        return ScenarioConfig(
            L=_require(d, "L", int, where, required=True),
            N=_require(d, "N", int, where, required=True),
            snr_s_db=_require(d, "snr_s_db", float, where, required=True),
            snr_r_db=_require(d, "snr_r_db", float, where, required=True),
            sigma_x2=_require(d, "sigma_x2", float, where, default=1.0),
            wishart_dof=_require(d, "wishart_dof", (int, type(None)), where),
            seed=_require(d, "seed", int, where, default=0),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def optimizer_from_dict(d: dict | None, where: str = "optimizer") -> TrustRegionOptions:
    if d is None:
        return TrustRegionOptions()
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    allowed = {
        "max_iter", "grad_tol", "initial_radius", "min_radius",
        "accept_ratio", "n_restarts", "restart_seed",
    }
    _reject_unknown(d, allowed, where)
    defaults = TrustRegionOptions()
    try:
        return TrustRegionOptions(
            max_iter=_require(d, "max_iter", int, where, default=defaults.max_iter),
            grad_tol=_require(d, "grad_tol", float, where, default=defaults.grad_tol),
            initial_radius=_require(d, "initial_radius", float, where, default=defaults.initial_radius),
            min_radius=_require(d, "min_radius", float, where, default=defaults.min_radius),
            accept_ratio=_require(d, "accept_ratio", float, where, default=defaults.accept_ratio),
            n_restarts=_require(d, "n_restarts", int, where, default=defaults.n_restarts),
            restart_seed=_require(d, "restart_seed", int, where, default=defaults.restart_seed),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def sweep_from_dict(d: dict | None, where: str = "sweep") -> SweepSpec | None:
    if d is None:
        return None
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    _reject_unknown(d, {"axis", "values", "snr_r_db_offset"}, where)
    axis = _require(d, "axis", str, where, required=True)
    values = d.get("values")
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise ConfigError(f"{where}.values: expected a list of numbers")
    offset = _require(d, "snr_r_db_offset", (int, float, type(None)), where)
    try:
        return SweepSpec(
            axis=axis,
            values=tuple(values),
            snr_r_db_offset=None if offset is None else float(offset),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be an object")
    allowed = {
        "scenario", "trials_h0", "trials_h1", "pfa_grid", "steering_mode",
        "detectors", "sweep", "optimizer", "max_failure_rate",
    }
    _reject_unknown(d, allowed, "config")
    if "scenario" not in d:
        raise ConfigError("config.scenario: required field is missing")
    scenario = scenario_from_dict(d["scenario"])
    pfa_grid = d.get("pfa_grid", [1e-2])
    if not isinstance(pfa_grid, list) or not pfa_grid or not all(
        isinstance(p, (int, float)) and not isinstance(p, bool) for p in pfa_grid
    ):
        raise ConfigError("config.pfa_grid: expected a nonempty list of numbers")
    detectors = d.get("detectors", list(DETECTOR_NAMES))
    if not isinstance(detectors, list) or not all(isinstance(x, str) for x in detectors):
        raise ConfigError("config.detectors: expected a list of detector names")
    mode = _require(d, "steering_mode", str, "config", default="random-unit")
    if mode not in STEERING_MODES:
        raise ConfigError(f"config.steering_mode: must be one of {STEERING_MODES}, got {mode!r}")
    try:
        return ExperimentConfig(
            scenario=scenario,
            trials_h0=_require(d, "trials_h0", int, "config", required=True),
            trials_h1=_require(d, "trials_h1", int, "config", default=0),
            pfa_grid=tuple(float(p) for p in pfa_grid),
            steering_mode=mode,
            detectors=tuple(detectors),
            sweep=sweep_from_dict(d.get("sweep")),
            optimizer=optimizer_from_dict(d.get("optimizer")),
            max_failure_rate=_require(d, "max_failure_rate", float, "config", default=1e-3),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved config as plain JSON types, defaults filled in."""
    out = dataclasses.asdict(cfg)
    out["scenario"]["wishart_dof"] = cfg.scenario.dof
    out["pfa_grid"] = list(cfg.pfa_grid)
    out["detectors"] = list(cfg.detectors)
    if cfg.sweep is not None:
        out["sweep"]["values"] = list(cfg.sweep.values)
    return out


def load_config(path: str, seed_override: int | None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = config_from_dict(raw)
    if seed_override is not None:
        try:
            scenario = dataclasses.replace(cfg.scenario, seed=seed_override)
        except ValueError as exc:
            raise ConfigError(f"--seed: {exc}") from exc
        cfg = dataclasses.replace(cfg, scenario=scenario)
    return cfg


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(
    out_dir: Path, command: str, cfg: ExperimentConfig, threads: int,
    outputs: list[str], failures: dict[str, int], started: float,
) -> None:
    manifest = {
        "tool": "subspace-glr",
        "version": __version__,
        "command": command,
        "config": config_to_dict(cfg),
        "threads": threads,
        "outputs": outputs,
        "trial_failures": failures,
        "duration_s": round(time.time() - started, 3),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(arg: str | None) -> Path:
    out = Path(arg) if arg else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_roc(args: argparse.Namespace) -> int:
    started = time.time()
    cfg = load_config(args.config, args.seed)
    out = _prepare_out(args.out)
    threads = resolve_threads(args.threads)
    curves, failures = run_roc_experiment(cfg, threads)
    roc_rows = []
    auc_rows = []
    for name in cfg.detectors:
        curve = curves[name]
        roc_rows += [[name, _fmt(p), _fmt(q)] for p, q in zip(curve.pfa, curve.pd)]
        auc_rows.append([name, _fmt(curve.auc)])
    _write_csv(out / "roc.csv", ["detector", "pfa", "pd"], roc_rows)
    _write_csv(out / "auc.csv", ["detector", "auc"], auc_rows)
    _write_manifest(out, "roc", cfg, threads, ["roc.csv", "auc.csv"], failures, started)
    log.info("roc: wrote %s and %s", out / "roc.csv", out / "auc.csv")
    return 0


def cmd_pm_sweep(args: argparse.Namespace) -> int:
    started = time.time()
    cfg = load_config(args.config, args.seed)
    if cfg.sweep is None:
        raise ConfigError("config.sweep: required for pm-sweep")
    out = _prepare_out(args.out)
    threads = resolve_threads(args.threads)
    points, failures = run_pm_sweep(cfg, threads)
    rows = []
    for name in cfg.detectors:
        for pt in points[name]:
            rows.append([name, _fmt(pt.sweep_value), _fmt(pt.pm), _fmt(pt.ci_lo), _fmt(pt.ci_hi)])
    _write_csv(out / "pm.csv", ["detector", "sweep_value", "pm", "ci_lo", "ci_hi"], rows)
    _write_manifest(out, "pm-sweep", cfg, threads, ["pm.csv"], failures, started)
    return 0


def cmd_null_dist(args: argparse.Namespace) -> int:
    started = time.time()
    cfg = load_config(args.config, args.seed)
    out = _prepare_out(args.out)
    threads = resolve_threads(args.threads)
    ks, table, n_valid = run_null_dist(cfg, threads)
    _write_csv(
        out / "nulldist.csv",
        ["t", "empirical_cdf", "chi2_cdf"],
        ([_fmt(t), _fmt(e), _fmt(c)] for t, e, c in table),
    )
    with open(out / "ks.json", "w") as fh:
        json.dump(
            {"ks_distance": ks, "n_trials": n_valid, "reference": "chi-squared, 2 dof"},
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    failures = {"H0": cfg.trials_h0 - n_valid}
    _write_manifest(out, "null-dist", cfg, threads, ["nulldist.csv", "ks.json"], failures, started)
    return 0


def _parse_thresholds(pairs: list[str]) -> dict[str, float]:
    out = {}
    for raw in pairs:
        name, sep, val = raw.partition("=")
        if not sep or name not in DETECTOR_NAMES:
            raise ConfigError(
                f"--threshold: expected NAME=VALUE with NAME in {DETECTOR_NAMES}, got {raw!r}"
            )
        try:
            out[name] = float(val)
        except ValueError as exc:
            raise ConfigError(f"--threshold {raw!r}: {exc}") from exc
    return out


def cmd_detect(args: argparse.Namespace) -> int:
    try:
        data = read_snapshots(args.data)
        steering = read_steering_csv(args.steering)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if steering.num_sensors != data.num_sensors:
        raise ConfigError(
            f"steering length {steering.num_sensors} does not match data sensors {data.num_sensors}"
        )
    if data.num_snapshots < 2 * data.num_sensors:
        raise ConfigError(
            f"need at least 2L = {2 * data.num_sensors} snapshots, file has {data.num_snapshots}"
        )
    thresholds = _parse_thresholds(args.threshold or [])
    report = compute_report(data, steering)
    s = sample_cov(data)
    result = {
        "L": data.num_sensors,
        "N": data.num_snapshots,
        "statistics": {name: report.stat(name) for name in DETECTOR_NAMES},
        "two_log_glr": report.two_log_glr,
        "optimizer": {
            "iterations": report.optim.iterations,
            "converged": report.optim.converged,
            "j_value": report.optim.j_value,
        },
        "sample_cov_condition": float(np.linalg.cond(s.full())),
    }
    if thresholds:
        result["decisions"] = {
            name: bool(report.stat(name) > thr) for name, thr in thresholds.items()
        }
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_validate_config(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed)
    json.dump(config_to_dict(cfg), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subspace-glr",
        description="Two-channel GLR detection experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        if needs_config:
            p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: cwd)")
        p.add_argument("--threads", type=int, default=0, help="worker processes, 0 = all cores")
        p.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")

    p_roc = sub.add_parser("roc", help="ROC and AUC tables from H0/H1 trials")
    add_common(p_roc)
    p_roc.set_defaults(func=cmd_roc)

    p_pm = sub.add_parser("pm-sweep", help="missed-detection probability along a sweep")
    add_common(p_pm)
    p_pm.set_defaults(func=cmd_pm_sweep)

    p_null = sub.add_parser("null-dist", help="null distribution of 2 log Lambda")
    add_common(p_null)
    p_null.set_defaults(func=cmd_null_dist)

    p_det = sub.add_parser("detect", help="score one snapshot file")
    p_det.add_argument("--data", required=True, help="snapshot CSV or binary file")
    p_det.add_argument("--steering", required=True, help="steering CSV file")
    p_det.add_argument(
        "--threshold", action="append", metavar="NAME=VALUE",
        help="decision threshold for one detector; repeatable",
    )
    p_det.set_defaults(func=cmd_detect)

    p_val = sub.add_parser("validate-config", help="check a config and print the resolved form")
    p_val.add_argument("--config", required=True, help="JSON run configuration")
    p_val.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
    p_val.set_defaults(func=cmd_validate_config)

    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("SUBSPACE_GLR_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        print(f"warning: unknown SUBSPACE_GLR_LOG level {level_name!r}, using WARNING", file=sys.stderr)
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DegenerateSampleError as exc:
        print(f"error: degenerate sample: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
