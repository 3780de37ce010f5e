import dataclasses

import numpy as np
import pytest

import subspace_glr as sg
from subspace_glr.montecarlo import apply_sweep_value, collect_stats, wilks_diag


def tiny_config(seed=1, L=2, N=8, trials_h0=4, trials_h1=4, detectors=("glr_low", "t_cc")):
    return sg.ExperimentConfig(
        scenario=sg.ScenarioConfig(L=L, N=N, snr_s_db=0.0, snr_r_db=10.0, seed=seed),
        trials_h0=trials_h0,
        trials_h1=trials_h1,
        detectors=detectors,
    )


def record_key(r):
    stats = None
    if r.report is not None:
        stats = tuple(
            (name, r.report.stat(name))
            for name in ("glr_low", "t_cc")
            if getattr(r.report, name) is not None
        )
    return (r.trial_index, r.hypothesis, r.seed_tag, r.error, stats)


class TestRunTrials:
    def test_deterministic_rerun(self):
        cfg = tiny_config()
        a = sg.run_trials(cfg, threads=1)
        b = sg.run_trials(cfg, threads=1)
        assert [record_key(r) for r in a] == [record_key(r) for r in b]

    def test_worker_count_invariance(self):
        cfg = tiny_config(trials_h0=8, trials_h1=8)
        serial = sg.run_trials(cfg, threads=1)
        parallel = sg.run_trials(cfg, threads=2)
        assert [record_key(r) for r in serial] == [record_key(r) for r in parallel]

    def test_record_reconstructible(self):
        cfg = tiny_config()
        records = sg.run_trials(cfg, threads=1)
        again = sg.run_one_trial(cfg, "H1", 2)
        match = next(r for r in records if r.hypothesis == "H1" and r.trial_index == 2)
        assert record_key(again) == record_key(match)

    def test_order_is_h0_then_h1(self):
        records = sg.run_trials(tiny_config(trials_h0=3, trials_h1=2), threads=1)
        hyps = [r.hypothesis for r in records]
        assert hyps == ["H0"] * 3 + ["H1"] * 2
        assert [r.trial_index for r in records] == [0, 1, 2, 0, 1]

    def test_hypotheses_use_disjoint_streams(self):
        cfg = tiny_config()
        h0 = sg.run_one_trial(cfg, "H0", 0)
        h1 = sg.run_one_trial(cfg, "H1", 0)
        assert h0.report.stat("glr_low") != h1.report.stat("glr_low")

    def test_signal_free_scenario_matches_null(self):
        # sigma_x2 = 0 makes H1 records statistically identical to H0 ones.
        sc = sg.ScenarioConfig(L=2, N=8, snr_s_db=0.0, snr_r_db=10.0, sigma_x2=0.0, seed=3)
        cfg = sg.ExperimentConfig(
            scenario=sc, trials_h0=800, trials_h1=800, detectors=("glr_low",)
        )
        records = sg.run_trials(cfg, threads=0)
        h0 = collect_stats(records, "glr_low", "H0")
        h1 = collect_stats(records, "glr_low", "H1")
        from scipy.stats import ks_2samp

        assert ks_2samp(h0, h1).pvalue > 0.01


class TestCollectAndCalibrate:
    def test_collect_filters_errors(self):
        rep = sg.DetectorReport(glr_low=0.5)
        records = [
            sg.TrialRecord(0, "H0", "t", report=rep),
            sg.TrialRecord(1, "H0", "t", error="boom"),
            sg.TrialRecord(0, "H1", "t", report=rep),
        ]
        assert collect_stats(records, "glr_low", "H0").tolist() == [0.5]

    def test_order_statistic_rank(self):
        stats = np.arange(1.0, 101.0)
        assert sg.calibrate_threshold(stats, 0.05) == 95.0
        assert sg.calibrate_threshold(stats, 0.5) == 50.0

    def test_empirical_rate_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            stats = rng.standard_normal(500)
            for pfa in (0.01, 0.1, 0.3):
                thr = sg.calibrate_threshold(stats, pfa)
                assert np.mean(stats > thr) <= pfa

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            sg.calibrate_threshold(np.array([]), 0.1)
        with pytest.raises(ValueError):
            sg.calibrate_threshold(np.ones(10), 1.5)


class TestRocCurve:
    def test_identical_distributions_auc_half(self):
        rng = np.random.default_rng(5)
        h0 = rng.standard_normal(4000)
        h1 = rng.standard_normal(4000)
        curve = sg.roc_curve(h0, h1)
        assert curve.auc == pytest.approx(0.5, abs=0.03)

    def test_disjoint_supports_auc_one(self):
        curve = sg.roc_curve(np.arange(100.0), np.arange(200.0, 300.0))
        assert curve.auc == pytest.approx(1.0, abs=1e-12)
        assert np.all(curve.pd[curve.pfa > 0] == 1.0)

    def test_monotone_in_pfa(self):
        rng = np.random.default_rng(6)
        curve = sg.roc_curve(rng.standard_normal(300), rng.standard_normal(300) + 1.0)
        assert np.all(np.diff(curve.pfa) >= 0)
        assert np.all(np.diff(curve.pd) >= 0)
        assert curve.pfa[0] == 0.0 or curve.pd[0] <= curve.pd[-1]
        assert curve.pfa[-1] == 1.0 and curve.pd[-1] == 1.0

    def test_shift_improves_auc(self):
        rng = np.random.default_rng(7)
        h0 = rng.standard_normal(2000)
        weak = sg.roc_curve(h0, rng.standard_normal(2000) + 0.3).auc
        strong = sg.roc_curve(h0, rng.standard_normal(2000) + 2.0).auc
        assert strong > weak > 0.5


class TestPmAt:
    def test_separated_samples(self):
        h0 = np.arange(100.0)
        h1 = np.arange(1000.0, 1100.0)
        point = sg.pm_at(h0, h1, pfa=0.05, sweep_value=-5.0)
        assert point.pm == 0.0
        assert point.ci_lo == 0.0 and point.ci_hi == 0.0
        assert point.sweep_value == -5.0

    def test_interval_brackets_estimate(self):
        rng = np.random.default_rng(8)
        point = sg.pm_at(rng.standard_normal(500), rng.standard_normal(400) + 1.0, 0.1)
        assert 0.0 <= point.ci_lo <= point.pm <= point.ci_hi <= 1.0
        assert point.ci_hi - point.ci_lo > 0.0


class TestWilksDiag:
    def test_chi2_sample_close(self):
        rng = np.random.default_rng(9)
        m = 10_000
        draws = -2.0 * np.log(rng.uniform(size=m))
        ks, table = wilks_diag(draws)
        assert ks <= 1.36 / np.sqrt(m) + 0.01
        assert table.shape == (m, 3)
        assert np.all(np.diff(table[:, 0]) >= 0)

    def test_constant_sample_far(self):
        ks, _ = wilks_diag(np.full(100, 5.0))
        assert ks > 0.9

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            wilks_diag(np.array([1.0, -1e-3]))

    def test_clips_roundoff(self):
        ks, table = wilks_diag(np.array([0.2, -1e-12, 1.0]))
        assert table[0, 0] == 0.0
        assert 0.0 < ks <= 1.0


class TestSweep:
    def test_axis_validation(self):
        with pytest.raises(ValueError, match="axis"):
            sg.SweepSpec(axis="bogus", values=(1.0, 2.0))
        with pytest.raises(ValueError, match="increasing"):
            sg.SweepSpec(axis="snr_s_db", values=(0.0, 0.0))
        with pytest.raises(ValueError, match="offset"):
            sg.SweepSpec(axis="n", values=(8.0, 12.0), snr_r_db_offset=10.0)
        assert sg.SweepSpec(axis="snr_s_db", values=(3.0,)).values == (3.0,)

    def test_snr_axis_couples_reference(self):
        cfg = tiny_config()
        cfg = dataclasses.replace(
            cfg, sweep=sg.SweepSpec(axis="snr_s_db", values=(-10.0, 0.0), snr_r_db_offset=10.0)
        )
        point = apply_sweep_value(cfg, -10.0)
        assert point.scenario.snr_s_db == -10.0
        assert point.scenario.snr_r_db == 0.0
        assert point.sweep is None

    def test_snr_axis_without_offset_keeps_reference(self):
        cfg = dataclasses.replace(
            tiny_config(), sweep=sg.SweepSpec(axis="snr_s_db", values=(-5.0, 5.0))
        )
        point = apply_sweep_value(cfg, 5.0)
        assert point.scenario.snr_r_db == 10.0

    def test_integer_axes(self):
        cfg = dataclasses.replace(tiny_config(), sweep=sg.SweepSpec(axis="n", values=(8.0, 12.0)))
        assert apply_sweep_value(cfg, 12.0).scenario.N == 12
        cfg = dataclasses.replace(
            tiny_config(L=2, N=16), sweep=sg.SweepSpec(axis="l", values=(2.0, 3.0))
        )
        point = apply_sweep_value(cfg, 3.0)
        assert point.scenario.L == 3 and isinstance(point.scenario.L, int)


class TestExperimentConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="trials_h0"):
            tiny_config(trials_h0=0)
        with pytest.raises(ValueError, match="pfa"):
            dataclasses.replace(tiny_config(), pfa_grid=(0.0,))
        with pytest.raises(ValueError, match="detector"):
            tiny_config(detectors=())
        with pytest.raises(ValueError, match="unknown"):
            tiny_config(detectors=("glr", "nope"))


class TestExperimentRunners:
    def test_roc_experiment_smoke(self):
        cfg = tiny_config(trials_h0=30, trials_h1=30, detectors=("glr_low", "sigma_max"))
        curves, failures = sg.run_roc_experiment(cfg, threads=1)
        assert set(curves) == {"glr_low", "sigma_max"}
        assert failures == {"H0": 0, "H1": 0}
        for curve in curves.values():
            assert 0.0 <= curve.auc <= 1.0

    def test_roc_requires_h1(self):
        with pytest.raises(ValueError, match="trials_h1"):
            sg.run_roc_experiment(tiny_config(trials_h1=0), threads=1)

    def test_pm_sweep_smoke(self):
        cfg = dataclasses.replace(
            tiny_config(trials_h0=30, trials_h1=30, detectors=("glr_low",)),
            sweep=sg.SweepSpec(axis="snr_s_db", values=(-5.0, 5.0), snr_r_db_offset=10.0),
            pfa_grid=(0.1,),
        )
        points, failures = sg.run_pm_sweep(cfg, threads=1)
        assert [p.sweep_value for p in points["glr_low"]] == [-5.0, 5.0]
        assert set(failures) == {repr(-5.0), repr(5.0)}
        assert all(0.0 <= p.pm <= 1.0 for p in points["glr_low"])

    def test_pm_sweep_requires_sweep(self):
        with pytest.raises(ValueError, match="sweep"):
            sg.run_pm_sweep(tiny_config(), threads=1)

    def test_null_dist_smoke(self):
        cfg = tiny_config(trials_h0=40, trials_h1=5, detectors=("glr",))
        ks, table, n_valid = sg.run_null_dist(cfg, threads=1)
        assert n_valid == 40  # H1 trials are dropped for a null-only run
        assert table.shape == (40, 3)
        assert 0.0 <= ks <= 1.0

    def test_null_dist_needs_glr(self):
        with pytest.raises(ValueError, match="glr"):
            sg.run_null_dist(tiny_config(detectors=("glr_low",)), threads=1)
