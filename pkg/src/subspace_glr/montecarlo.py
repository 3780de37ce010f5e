"""Monte Carlo harness: trial generation, calibration, ROC and sweep curves.

Trials are embarrassingly parallel and fully reproducible. Each trial owns
Philox substreams keyed by (run seed, hypothesis, trial index, purpose), so
the records do not depend on execution order, chunking, or worker count;
reruns with the same config and seed produce identical numbers whether the
pool has one process or eight.

Thresholds are calibrated empirically from the H0 sample as the order
statistic at rank ceil((1 - pfa) * M), i.e. the smallest threshold whose
false-alarm rate on the calibration sample does not exceed pfa. Detection
declares when a statistic strictly exceeds the threshold.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .detectors import DETECTOR_NAMES, DetectorReport, compute_report
from .model import (
    STEERING_MODES,
    STREAM_GAINS,
    STREAM_NOISE_COV,
    STREAM_SNAPSHOTS,
    STREAM_STEERING,
    ScenarioConfig,
    draw_channel,
    draw_steering,
    substream,
    synth_snapshots,
)
from .optimizer import TrustRegionOptions

log = logging.getLogger(__name__)

SWEEP_AXES = ("snr_s_db", "n", "l")


@dataclass
class SweepSpec:
    """One swept scenario parameter.

    axis "snr_s_db" optionally couples the reference SNR through a fixed
    offset in dB (snr_r = snr_s + snr_r_db_offset); axes "n" and "l" sweep
    the snapshot count and array size at fixed SNRs.
    """

    axis: str
    values: tuple[float, ...]
    snr_r_db_offset: float | None = None

    def __post_init__(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        self.values = tuple(float(v) for v in self.values)
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if self.snr_r_db_offset is not None and self.axis != "snr_s_db":
            raise ValueError("snr_r_db_offset only applies to the snr_s_db axis")


@dataclass
class ExperimentConfig:
    """Everything a run needs besides the worker count."""

    scenario: ScenarioConfig
    trials_h0: int
    trials_h1: int = 0
    pfa_grid: tuple[float, ...] = (1e-2,)
    steering_mode: str = "random-unit"
    detectors: tuple[str, ...] = DETECTOR_NAMES
    sweep: SweepSpec | None = None
    optimizer: TrustRegionOptions = field(default_factory=TrustRegionOptions)
    max_failure_rate: float = 1e-3

    def __post_init__(self) -> None:
        if self.trials_h0 < 1:
            raise ValueError("trials_h0 must be >= 1")
        if self.trials_h1 < 0:
            raise ValueError("trials_h1 must be >= 0")
        self.pfa_grid = tuple(float(p) for p in self.pfa_grid)
        if any(not 0.0 < p < 1.0 for p in self.pfa_grid):
            raise ValueError("every pfa must lie in (0, 1)")
        if self.steering_mode not in STEERING_MODES:
            raise ValueError(
                f"steering_mode must be one of {STEERING_MODES}, got {self.steering_mode!r}"
            )
        self.detectors = tuple(self.detectors)
        unknown = set(self.detectors) - set(DETECTOR_NAMES)
        if unknown:
            raise ValueError(f"unknown detectors {sorted(unknown)}; valid: {DETECTOR_NAMES}")
        if not self.detectors:
            raise ValueError("at least one detector is required")
        if not 0.0 <= self.max_failure_rate < 1.0:
            raise ValueError("max_failure_rate must lie in [0, 1)")


@dataclass
class TrialRecord:
    """One trial's outcome. error is None for valid records; failed trials
    keep their seed tag and message so nothing is silently dropped."""

    trial_index: int
    hypothesis: str
    seed_tag: str
    report: DetectorReport | None = None
    iterations: int = 0
    error: str | None = None


def _hyp_code(hypothesis: str) -> int:
    return {"H0": 0, "H1": 1}[hypothesis]


def run_one_trial(cfg: ExperimentConfig, hypothesis: str, trial_index: int) -> TrialRecord:
    """Synthesize and score a single trial from its derived substreams."""
    sc = cfg.scenario
    code = _hyp_code(hypothesis)
    tag = f"{sc.seed}/{hypothesis}/{trial_index}"
    try:
        steering = draw_steering(
            cfg.steering_mode, sc.L, substream(sc.seed, code, trial_index, STREAM_STEERING)
        )
        chan = draw_channel(
            sc,
            substream(sc.seed, code, trial_index, STREAM_GAINS),
            substream(sc.seed, code, trial_index, STREAM_NOISE_COV),
        )
        data = synth_snapshots(
            sc, steering, chan, hypothesis, substream(sc.seed, code, trial_index, STREAM_SNAPSHOTS)
        )
        report = compute_report(data, steering, cfg.optimizer, cfg.detectors)
    except Exception as exc:
        return TrialRecord(trial_index, hypothesis, tag, error=f"{type(exc).__name__}: {exc}")
    iters = report.optim.iterations if report.optim is not None else 0
    return TrialRecord(trial_index, hypothesis, tag, report=report, iterations=iters)


def _run_chunk(cfg: ExperimentConfig, items: list[tuple[str, int]]) -> list[TrialRecord]:
    return [run_one_trial(cfg, hyp, idx) for hyp, idx in items]


def resolve_threads(threads: int) -> int:
    if threads < 0:
        raise ValueError("threads must be >= 0 (0 means auto)")
    return threads if threads > 0 else (os.cpu_count() or 1)


def run_trials(cfg: ExperimentConfig, threads: int = 0) -> list[TrialRecord]:
    """Run the configured H0 and H1 trials.

    Records come back ordered (all H0 by index, then all H1 by index)
    regardless of how many workers executed them.
    """
    items = [("H0", i) for i in range(cfg.trials_h0)]
    items += [("H1", i) for i in range(cfg.trials_h1)]
    workers = resolve_threads(threads)
    if workers == 1 or len(items) < 2 * workers:
        records = _run_chunk(cfg, items)
    else:
        chunk_size = max(1, math.ceil(len(items) / (workers * 8)))
        chunks = [items[i : i + chunk_size] for i in range(0, len(items), chunk_size)]
        records = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, [cfg] * len(chunks), chunks):
                records.extend(part)
    bad = sum(1 for r in records if r.error is not None)
    if bad:
        log.warning("%d of %d trials failed; first: %s", bad, len(records),
                    next(r.error for r in records if r.error is not None))
    if bad > cfg.max_failure_rate * len(records):
        raise RuntimeError(
            f"{bad} of {len(records)} trials failed, above the allowed rate {cfg.max_failure_rate}"
        )
    return records


def collect_stats(records: list[TrialRecord], detector: str, hypothesis: str) -> np.ndarray:
    """Statistic values of the valid records for one detector and hypothesis."""
    vals = [
        r.report.stat(detector)
        for r in records
        if r.hypothesis == hypothesis and r.error is None and r.report is not None
    ]
    return np.asarray(vals, dtype=float)


def calibrate_threshold(h0_stats: np.ndarray, pfa: float) -> float:
    """Empirical threshold: order statistic of the H0 sample at rank
    ceil((1 - pfa) * M). The strict-exceedance decision rule then has
    empirical false-alarm rate <= pfa on the calibration sample."""
    h0_stats = np.asarray(h0_stats, dtype=float)
    m = h0_stats.size
    if m < 1:
        raise ValueError("empty H0 sample")
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"pfa must lie in (0, 1), got {pfa}")
    if m < 10.0 / pfa:
        log.warning("only %d H0 trials for pfa = %g; threshold is noisy", m, pfa)
    rank = math.ceil((1.0 - pfa) * m)
    rank = min(max(rank, 1), m)
    return float(np.sort(h0_stats)[rank - 1])


@dataclass
class RocCurve:
    """Empirical operating points of one detector, sorted by pfa."""

    pfa: np.ndarray
    pd: np.ndarray
    auc: float


def roc_curve(h0_stats: np.ndarray, h1_stats: np.ndarray) -> RocCurve:
    """Empirical ROC over the pooled thresholds, with trapezoidal AUC.

    Both endpoints (0, 0) and (1, 1) are included, so equal-distribution
    samples give AUC near 1/2 and disjoint supports give AUC 1.
    """
    h0 = np.sort(np.asarray(h0_stats, dtype=float))
    h1 = np.sort(np.asarray(h1_stats, dtype=float))
    if h0.size == 0 or h1.size == 0:
        raise ValueError("roc_curve needs nonempty samples under both hypotheses")
    thresholds = np.unique(np.concatenate([h0, h1]))
    pfa = 1.0 - np.searchsorted(h0, thresholds, side="right") / h0.size
    pd = 1.0 - np.searchsorted(h1, thresholds, side="right") / h1.size
    pfa = np.concatenate([[1.0], pfa])
    pd = np.concatenate([[1.0], pd])
    # lexicographic order: ties in pfa ascend in pd, so the sweep leaves
    # each vertical segment from its best point and pd stays monotone
    order = np.lexsort((pd, pfa))
    pfa, pd = pfa[order], pd[order]
    auc = float(np.trapezoid(pd, pfa))
    return RocCurve(pfa=pfa, pd=pd, auc=auc)


@dataclass
class PmPoint:
    """Missed-detection probability at one sweep point, with a 95 percent
    binomial (normal-approximation) interval clipped to [0, 1]."""

    sweep_value: float
    pm: float
    ci_lo: float
    ci_hi: float


def pm_at(
    h0_stats: np.ndarray, h1_stats: np.ndarray, pfa: float, sweep_value: float = math.nan
) -> PmPoint:
    """Missed-detection probability at an H0-calibrated threshold."""
    thr = calibrate_threshold(h0_stats, pfa)
    h1 = np.asarray(h1_stats, dtype=float)
    if h1.size == 0:
        raise ValueError("empty H1 sample")
    pm = float(np.mean(h1 <= thr))
    half = 1.96 * math.sqrt(max(pm * (1.0 - pm), 0.0) / h1.size)
    return PmPoint(
        sweep_value=sweep_value,
        pm=pm,
        ci_lo=max(0.0, pm - half),
        ci_hi=min(1.0, pm + half),
    )


def wilks_diag(two_log_glr: np.ndarray) -> tuple[float, np.ndarray]:
    """Kolmogorov-Smirnov distance of 2 log Lambda to chi-squared with two
    degrees of freedom, plus the CDF comparison table.

    Returns (ks, table) where table columns are (t, empirical_cdf,
    chi2_cdf) at the sorted sample points. Values are clamped at zero;
    anything below -1e-9 is rejected as a computation error.
    """
    vals = np.asarray(two_log_glr, dtype=float)
    if vals.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite statistic in sample")
    if np.min(vals) < -1e-9:
        raise ValueError(f"negative statistic {np.min(vals):.3e} below tolerance")
    vals = np.sort(np.clip(vals, 0.0, None))
    m = vals.size
    ref = 1.0 - np.exp(-0.5 * vals)  # chi-squared(2) CDF
    hi = np.arange(1, m + 1) / m
    lo = np.arange(0, m) / m
    ks = float(max(np.max(np.abs(hi - ref)), np.max(np.abs(ref - lo))))
    table = np.column_stack([vals, hi, ref])
    return ks, table


def apply_sweep_value(cfg: ExperimentConfig, value: float) -> ExperimentConfig:
    """Config for one sweep point; trials get fresh streams because the
    scenario (not the seed) changes."""
    if cfg.sweep is None:
        raise ValueError("config has no sweep")
    sc = cfg.scenario
    axis = cfg.sweep.axis
    if axis == "snr_s_db":
        snr_r = sc.snr_r_db if cfg.sweep.snr_r_db_offset is None else value + cfg.sweep.snr_r_db_offset
        sc = dataclasses.replace(sc, snr_s_db=value, snr_r_db=snr_r)
    elif axis == "n":
        sc = dataclasses.replace(sc, N=int(value))
    else:
        sc = dataclasses.replace(sc, L=int(value))
    return dataclasses.replace(cfg, scenario=sc, sweep=None)


def run_roc_experiment(
    cfg: ExperimentConfig, threads: int = 0
) -> tuple[dict[str, RocCurve], dict[str, int]]:
    """ROC curves for every configured detector, plus failure counts."""
    if cfg.trials_h1 < 1:
        raise ValueError("a ROC run needs trials_h1 >= 1")
    records = run_trials(cfg, threads)
    failures = {
        "H0": sum(1 for r in records if r.hypothesis == "H0" and r.error is not None),
        "H1": sum(1 for r in records if r.hypothesis == "H1" and r.error is not None),
    }
    curves = {}
    for name in cfg.detectors:
        h0 = collect_stats(records, name, "H0")
        h1 = collect_stats(records, name, "H1")
        curves[name] = roc_curve(h0, h1)
    return curves, failures


def run_pm_sweep(
    cfg: ExperimentConfig, threads: int = 0
) -> tuple[dict[str, list[PmPoint]], dict[str, int]]:
    """Missed-detection probability along the sweep, one curve per detector.

    Thresholds are recalibrated from the H0 trials of each sweep point at
    the first pfa in the grid. Also returns failed-trial counts keyed by
    sweep value.
    """
    if cfg.sweep is None:
        raise ValueError("pm sweep requires a sweep block in the config")
    if cfg.trials_h1 < 1:
        raise ValueError("a pm sweep needs trials_h1 >= 1")
    pfa = cfg.pfa_grid[0]
    out: dict[str, list[PmPoint]] = {name: [] for name in cfg.detectors}
    failures: dict[str, int] = {}
    for value in cfg.sweep.values:
        point_cfg = apply_sweep_value(cfg, value)
        records = run_trials(point_cfg, threads)
        failures[repr(float(value))] = sum(1 for r in records if r.error is not None)
        for name in cfg.detectors:
            h0 = collect_stats(records, name, "H0")
            h1 = collect_stats(records, name, "H1")
            out[name].append(pm_at(h0, h1, pfa, sweep_value=value))
    return out, failures


def run_null_dist(
    cfg: ExperimentConfig, threads: int = 0
) -> tuple[float, np.ndarray, int]:
    """Null distribution of 2 log Lambda against its large-sample reference.

    Runs H0 trials only (the exact detector must be enabled) and returns
    (ks distance, cdf table, number of valid trials).
    """
    if "glr" not in cfg.detectors:
        raise ValueError("null-dist requires the glr detector")
    cfg = dataclasses.replace(cfg, trials_h1=0)
    records = run_trials(cfg, threads)
    vals = np.asarray(
        [
            r.report.two_log_glr
            for r in records
            if r.error is None and r.report is not None and r.report.two_log_glr is not None
        ],
        dtype=float,
    )
    ks, table = wilks_diag(vals)
    return ks, table, int(vals.size)
