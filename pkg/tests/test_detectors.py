import numpy as np
import pytest

import subspace_glr as sg
from subspace_glr.covariance import cross_capon_beta
from subspace_glr.detectors import oracle_glr
from _utils import det_m_direct, make_instance, null_cov, rand_unit


def scaled_instance(seed, c_s, c_r, L=3, N=None):
    s, steer, data = make_instance(seed=seed, L=L, N=N)
    scaled = sg.block_sample_cov(c_s * data.y_s, c_r * data.y_r)
    return s, scaled, steer, data


class TestNullCrossBlock:
    def test_exact_statistic_is_one(self):
        for seed in range(5):
            s, steer, _ = make_instance(seed=seed, L=3)
            stat, res = sg.glr_exact(null_cov(s), steer.u_s, steer.u_r)
            assert stat == pytest.approx(1.0, abs=1e-6)
            assert res.converged

    def test_closed_forms_are_zero(self):
        s, steer, _ = make_instance(seed=6, L=4)
        s0 = null_cov(s)
        assert sg.glr_sample(s0, steer.u_s, steer.u_r) == 0.0
        assert sg.glr_low(s0, steer.u_s, steer.u_r) == 0.0
        assert sg.sigma_max_coherence(s0) == 0.0
        assert sg.cross_corr_stat(s0) == 0.0
        assert sg.ml_qsr(s0, steer.u_s, steer.u_r) == 0.0

    def test_oracle_agrees(self):
        s, steer, _ = make_instance(seed=7, L=2)
        assert oracle_glr(null_cov(s), steer.u_s, steer.u_r, n_restarts=2) == pytest.approx(
            1.0, abs=1e-6
        )


class TestScaleInvariance:
    def test_positive_scalings_five_invariant(self):
        for seed, (c_s, c_r) in enumerate([(1e-3, 1.0), (1e3, 1e-3), (1e3, 1e3)]):
            s, scaled, steer, data = scaled_instance(900 + seed, c_s, c_r)
            base_exact, _ = sg.glr_exact(s, steer.u_s, steer.u_r)
            got_exact, _ = sg.glr_exact(scaled, steer.u_s, steer.u_r)
            assert got_exact == pytest.approx(base_exact, rel=1e-9)
            for fn in (sg.glr_sample, sg.glr_low):
                assert fn(scaled, steer.u_s, steer.u_r) == pytest.approx(
                    fn(s, steer.u_s, steer.u_r), rel=1e-9
                )
            assert sg.sigma_max_coherence(scaled) == pytest.approx(
                sg.sigma_max_coherence(s), rel=1e-9
            )
            scaled_data = sg.SnapshotData(c_s * data.y_s, c_r * data.y_r, data.hypothesis)
            assert sg.svd_corr_stat(scaled_data) == pytest.approx(
                sg.svd_corr_stat(data), rel=1e-9
            )

    def test_cross_corr_scales_exactly(self):
        # the one deliberately non-invariant statistic: raw Frobenius energy
        for seed, (c_s, c_r) in enumerate([(1e-3, 1.0), (1e3, 1e-3), (7.0, 0.2)]):
            s, scaled, _, _ = scaled_instance(905 + seed, c_s, c_r)
            assert sg.cross_corr_stat(scaled) == pytest.approx(
                (c_s * c_r) ** 2 * sg.cross_corr_stat(s), rel=1e-10
            )

    def test_complex_scalings_proposed_three(self):
        c_s, c_r = 2.0 * np.exp(0.7j), 0.05 * np.exp(-2.1j)
        s, scaled, steer, _ = scaled_instance(910, c_s, c_r)
        base_exact, _ = sg.glr_exact(s, steer.u_s, steer.u_r)
        got_exact, _ = sg.glr_exact(scaled, steer.u_s, steer.u_r)
        assert got_exact == pytest.approx(base_exact, rel=1e-9)
        for fn in (sg.glr_sample, sg.glr_low):
            assert fn(scaled, steer.u_s, steer.u_r) == pytest.approx(
                fn(s, steer.u_s, steer.u_r), rel=1e-9
            )


class TestLowSnrIdentities:
    def test_three_expressions_agree(self):
        for seed in range(20):
            s, steer, _ = make_instance(seed=1000 + seed, L=3)
            lam = sg.glr_low(s, steer.u_s, steer.u_r)
            pair = sg.capon_pair(s, steer.u_s, steer.u_r)
            capon_form = abs(np.vdot(pair.b_s, s.s_sr @ pair.b_r)) ** 2 / (
                np.vdot(pair.b_s, s.s_ss @ pair.b_s).real
                * np.vdot(pair.b_r, s.s_rr @ pair.b_r).real
            )
            whitened_form = abs(np.vdot(pair.w_s, sg.coherence_matrix(s) @ pair.w_r)) ** 2
            assert capon_form == pytest.approx(lam, rel=1e-10)
            assert whitened_form == pytest.approx(lam, rel=1e-10)

    def test_inflation_identity(self):
        for seed in range(20):
            s, steer, _ = make_instance(seed=1100 + seed, L=3)
            lam_low = sg.glr_low(s, steer.u_s, steer.u_r)
            lam_app = sg.glr_sample(s, steer.u_s, steer.u_r)
            pair = sg.capon_pair(s, steer.u_s, steer.u_r)
            c = sg.coherence_matrix(s)
            shrink = np.vdot(pair.w_r, c.conj().T @ c @ pair.w_r).real
            assert lam_app == pytest.approx(lam_low / (1.0 - shrink), rel=1e-10)

    def test_coherence_bound(self):
        for seed in range(20):
            s, steer, _ = make_instance(seed=1200 + seed, L=4)
            lam_low = sg.glr_low(s, steer.u_s, steer.u_r)
            smax = sg.sigma_max_coherence(s)
            assert lam_low <= smax**2 + 1e-12
            pair = sg.capon_pair(s, steer.u_s, steer.u_r)
            inner = abs(np.vdot(pair.w_s, sg.coherence_matrix(s) @ pair.w_r))
            assert smax >= inner - 1e-12


class TestScalarCase:
    def test_low_snr_is_squared_coherence(self):
        s = sg.BlockSampleCov(
            np.array([[2.0]]), np.array([[1.0 + 1.0j]]), np.array([[4.0]]), n=3
        )
        one = np.array([1.0 + 0j])
        want = abs(1.0 + 1.0j) ** 2 / 8.0
        assert sg.glr_low(s, one, one) == pytest.approx(want, rel=1e-12)
        assert sg.sigma_max_coherence(s) == pytest.approx(np.sqrt(want), rel=1e-12)

    def test_exact_single_sensor(self):
        rng = np.random.default_rng(8)
        y_s = rng.standard_normal((1, 6)) + 1j * rng.standard_normal((1, 6))
        y_r = rng.standard_normal((1, 6)) + 1j * rng.standard_normal((1, 6))
        s = sg.block_sample_cov(y_s, y_r)
        one = np.array([1.0 + 0j])
        stat, res = sg.glr_exact(s, one, one)
        assert res.iterations == 0 and res.converged
        assert stat >= 1.0 - 1e-12
        # scalar blocks admit a closed form: 1 / (1 - squared coherence)
        rho2 = sg.glr_low(s, one, one)
        assert stat == pytest.approx(1.0 / (1.0 - rho2), rel=1e-10)


class TestExactStatistic:
    def test_dominates_sample_approximation(self):
        for seed in range(10):
            s, steer, _ = make_instance(seed=1300 + seed, L=3)
            stat, _ = sg.glr_exact(s, steer.u_s, steer.u_r)
            lam_app = sg.glr_sample(s, steer.u_s, steer.u_r)
            assert stat >= 1.0 + lam_app - 1e-8

    def test_matches_brute_force_oracle(self):
        for seed in range(2):
            s, steer, _ = make_instance(seed=1400 + seed, L=2, N=50)
            stat, _ = sg.glr_exact(s, steer.u_s, steer.u_r)
            ref = oracle_glr(s, steer.u_s, steer.u_r, n_restarts=4, seed=seed)
            assert stat == pytest.approx(ref, rel=1e-4)

    def test_oracle_feasibility_bound(self):
        for seed in range(3):
            s, steer, _ = make_instance(seed=1500 + seed, L=2)
            ref = oracle_glr(s, steer.u_s, steer.u_r, n_restarts=2, seed=seed)
            lam_app = sg.glr_sample(s, steer.u_s, steer.u_r)
            assert ref >= 1.0 + lam_app - 1e-6

    def test_completion_invariance(self):
        rng = np.random.default_rng(9)
        for seed in range(5):
            s, steer, _ = make_instance(seed=1600 + seed, L=4)
            base, _ = sg.glr_exact(s, steer.u_s, steer.u_r)
            # random alternative completion: orthonormalize a rotated basis
            v0 = sg.unitary_completion(steer.u_r)
            k = v0.shape[1]
            z = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
            q, _ = np.linalg.qr(z)
            forms = sg.build_reduced_forms(s, steer.u_s, steer.u_r, v_r=v0 @ q)
            alt, _ = sg.glr_exact(s, steer.u_s, steer.u_r, forms=forms)
            assert alt == pytest.approx(base, rel=1e-8)

    def test_nu_squared_component_product(self):
        s, steer, _ = make_instance(seed=40, L=3)
        forms = sg.build_reduced_forms(s, steer.u_s, steer.u_r)
        ctx = sg.CostContext(forms.xi, forms.psi, forms.gamma_m)
        x = rand_unit(np.random.default_rng(10), 3)
        out = sg.nu_squared(x, ctx)
        q_e, q_xi, q_psi, q_gam = out.components
        assert out.value == pytest.approx((q_e / q_xi) * (q_psi / q_gam), rel=1e-12)


class TestCrossGainEstimate:
    def test_zero_cross_block(self):
        s, steer, _ = make_instance(seed=41, L=3)
        assert sg.ml_qsr(null_cov(s), steer.u_s, steer.u_r) == 0.0

    def test_grid_minimizes_determinant(self):
        for seed in range(3):
            s, steer, _ = make_instance(seed=1700 + seed, L=2)
            q_hat = sg.ml_qsr(s, steer.u_s, steer.u_r)
            r = 3.0 * abs(q_hat)
            re = np.linspace(q_hat.real - r, q_hat.real + r, 41)
            im = np.linspace(q_hat.imag - r, q_hat.imag + r, 41)
            grid = re[:, None] + 1j * im[None, :]
            dets = det_m_direct(s, steer.u_s, steer.u_r, grid.ravel())
            d_hat = det_m_direct(s, steer.u_s, steer.u_r, np.array([q_hat]))[0]
            assert d_hat <= dets.min() + 1e-12 * abs(d_hat)

    def test_m_matrix_matches_direct_assembly(self):
        s, steer, _ = make_instance(seed=42, L=3)
        rng = np.random.default_rng(11)
        for _ in range(5):
            q = complex(rng.standard_normal(), rng.standard_normal())
            m = sg.m_matrix(s, steer.u_s, steer.u_r, q)
            want = det_m_direct(s, steer.u_s, steer.u_r, np.array([q]))[0]
            assert np.linalg.det(m).real == pytest.approx(want, rel=1e-10)

    def test_low_snr_trace_constraint(self):
        for seed in range(5):
            s, steer, _ = make_instance(seed=1800 + seed, L=3)
            q = sg.low_snr_qsr(s, steer.u_s, steer.u_r)
            L = s.num_sensors
            cross = q * np.outer(steer.u_s, steer.u_r.conj())
            r1 = np.block([[s.s_ss, cross], [cross.conj().T, s.s_rr]])
            val = np.trace(np.linalg.solve(r1, s.full())).real
            assert val == pytest.approx(2 * L, abs=1e-8)


class TestComparisonStats:
    def test_svd_identical_channels(self):
        rng = np.random.default_rng(12)
        y = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
        data = sg.SnapshotData(y, y.copy(), "unknown")
        assert sg.svd_corr_stat(data) == pytest.approx(1.0, rel=1e-12)

    def test_svd_noiseless_rank_one(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        h_s = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        h_r = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        data = sg.SnapshotData(np.outer(h_s, x), np.outer(h_r, x), "unknown")
        assert sg.svd_corr_stat(data) == pytest.approx(1.0, rel=1e-10)

    def test_svd_rejects_zero_channel(self):
        with pytest.raises(ValueError):
            sg.svd_corr_stat(sg.SnapshotData(np.zeros((2, 4), complex), np.ones((2, 4), complex), "unknown"))

    def test_cross_corr_nonnegative_bounded(self):
        # entrywise Cauchy-Schwarz on snapshot rows: |S_sr|_F^2 <= tr S_ss tr S_rr
        for seed in range(10):
            s, _, _ = make_instance(seed=1900 + seed, L=3)
            val = sg.cross_corr_stat(s)
            bound = np.trace(s.s_ss).real * np.trace(s.s_rr).real
            assert 0.0 <= val <= bound * (1.0 + 1e-12)

    def test_range_invariants(self):
        for seed in range(10):
            s, steer, data = make_instance(seed=2000 + seed, L=3)
            assert 0.0 <= sg.glr_low(s, steer.u_s, steer.u_r) <= 1.0 + 1e-12
            assert 0.0 <= sg.sigma_max_coherence(s) <= 1.0 + 1e-12
            assert 0.0 <= sg.svd_corr_stat(data) <= 1.0 + 1e-12
            assert sg.glr_sample(s, steer.u_s, steer.u_r) >= 0.0


class TestComputeReport:
    def test_full_report(self):
        _, steer, data = make_instance(seed=43, L=3)
        rep = sg.compute_report(data, steer)
        assert rep.glr_1n >= 1.0 - 1e-9
        n = data.num_snapshots
        assert rep.two_log_glr == pytest.approx(2.0 * n * np.log(rep.glr_1n), rel=1e-12)
        assert rep.optim is not None and rep.optim.converged
        for name in sg.DETECTOR_NAMES:
            assert np.isfinite(rep.stat(name))

    def test_subset_leaves_others_none(self):
        _, steer, data = make_instance(seed=44, L=3)
        rep = sg.compute_report(data, steer, detectors=("glr_low", "t_cc"))
        assert rep.glr_low is not None and rep.t_cc is not None
        assert rep.glr_1n is None and rep.optim is None
        with pytest.raises(KeyError):
            rep.stat("glr")

    def test_rejects_unknown_detector(self):
        _, steer, data = make_instance(seed=45, L=3)
        with pytest.raises(ValueError, match="unknown"):
            sg.compute_report(data, steer, detectors=("glr", "bogus"))

    def test_matches_standalone_functions(self):
        s, steer, data = make_instance(seed=46, L=3)
        rep = sg.compute_report(data, steer)
        assert rep.glr_sample == pytest.approx(
            sg.glr_sample(s, steer.u_s, steer.u_r), rel=1e-12
        )
        assert rep.sigma_max == pytest.approx(sg.sigma_max_coherence(s), rel=1e-12)
        assert rep.t_svd == pytest.approx(sg.svd_corr_stat(data), rel=1e-12)


class TestDegenerateSamples:
    def test_undersampled_rejected(self):
        rng = np.random.default_rng(14)
        L, N = 3, 4  # N < 2L
        y_s = rng.standard_normal((L, N)) + 1j * rng.standard_normal((L, N))
        y_r = rng.standard_normal((L, N)) + 1j * rng.standard_normal((L, N))
        s = sg.block_sample_cov(y_s, y_r)
        u = rand_unit(rng, L)
        with pytest.raises(ValueError):
            sg.glr_exact(s, u, u)
