import numpy as np
import numpy.testing as npt
import pytest

from mmvamp.amp import AmpConfig, amp_init, amp_solve
from mmvamp.denoiser import PriorParams
from mmvamp.model import ModelConfig, gen_instance
from mmvamp.se import (
    SeMatrixState,
    mean_weight_check,
    se_fixed_point,
    se_predict_trace,
    se_step_matrix,
    se_step_scalar,
)

from conftest import random_spd


class TestScalarStep:
    def test_reference_values(self):
        assert se_step_scalar(1.0, 0.1, 0.5, 0.0) == pytest.approx(0.1)
        assert se_step_scalar(0.0, 0.1, 0.5, 0.3) == pytest.approx(0.3)
        assert se_step_scalar(0.1, 0.1, 0.5, 0.0) == pytest.approx(0.2 * 0.1 / 1.1)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            se_step_scalar(-0.1, 0.1, 0.5, 0.0)
        with pytest.raises(ValueError):
            se_step_scalar(0.1, 0.1, 0.0, 0.0)

    def test_map_contracts_iff_sparsity_below_undersampling(self):
        grid = np.linspace(1e-6, 50.0, 1000)
        shrink_all = all(se_step_scalar(c, 0.3, 0.4, 0.0) <= c for c in grid)
        assert shrink_all
        grows_somewhere = any(se_step_scalar(c, 0.5, 0.4, 0.0) > c for c in grid)
        assert grows_somewhere

    def test_slope_at_origin(self):
        h = 1e-9
        slope = se_step_scalar(h, 0.2, 0.5, 0.0) / h
        assert slope == pytest.approx(0.4, rel=1e-6)


class TestFixedPoint:
    def test_collapse_below_boundary(self):
        for c1 in (0.01, 1.0, 100.0):
            c_star, iters = se_fixed_point(0.1, 0.5, 0.0, tol=1e-14, c1=c1, max_iter=10_000)
            assert c_star < 1e-8
            assert iters < 10_000

    def test_nonzero_attractor_above_boundary(self):
        c_star, _ = se_fixed_point(0.3, 0.2, 0.0, tol=1e-10, c1=100.0)
        assert c_star == pytest.approx(0.5, abs=1e-6)
        c_star, _ = se_fixed_point(0.3, 0.2, 0.0, tol=1e-10, c1=1e-4)
        assert c_star == pytest.approx(0.5, abs=1e-6)

    def test_tangent_boundary_decays_slowly(self):
        c_star, iters = se_fixed_point(0.3, 0.3, 0.0, tol=1e-6, c1=1.0, max_iter=10**6)
        assert c_star < 1e-2
        # harmonic approach: 1/c grows by one per step
        assert iters > 100

    def test_noisy_fixed_point_solves_balance_equation(self):
        c_star, _ = se_fixed_point(0.1, 0.5, 0.01, tol=1e-14)
        assert se_step_scalar(c_star, 0.1, 0.5, 0.01) == pytest.approx(c_star, abs=1e-12)


class TestPredictTrace:
    def test_reference_prefix(self):
        trace = se_predict_trace(0.1, 0.5, 0.0, 4)
        npt.assert_allclose(trace, [0.2, 0.0333333333, 0.0064516129, 0.0012820513], rtol=1e-7)
        assert all(a > b for a, b in zip(trace, trace[1:]))

    def test_empty_prior_sticks_at_noise_floor(self):
        trace = se_predict_trace(0.0, 0.5, 0.25, 5)
        npt.assert_allclose(trace[1:], 0.25)

    def test_heavy_noise_monotone_to_fixed_point(self):
        trace = se_predict_trace(0.1, 0.5, 2.0, 50)
        diffs = np.diff(trace)
        assert np.all(diffs >= -1e-15) or np.all(diffs <= 1e-15)
        assert trace[-1] == pytest.approx(se_step_scalar(trace[-1], 0.1, 0.5, 2.0), abs=1e-10)


class TestMatrixStep:
    def test_gaussian_prior_has_closed_form(self, rng):
        slab = random_spd(rng, 3)
        prior = PriorParams(1.0, slab)
        sigma = random_spd(rng, 3)
        state = SeMatrixState(Gamma=np.eye(3), Sigma=sigma, mc_samples=200_000)
        out = se_step_matrix(state, prior, 0.5, 0.01, rng)
        expected = np.linalg.inv(np.linalg.inv(slab) + np.linalg.inv(sigma))
        assert np.max(np.abs(out.Gamma - expected)) < 0.01 * np.max(np.abs(expected))
        npt.assert_allclose(out.Sigma, 0.01 * np.eye(3) + out.Gamma / 0.5, rtol=1e-12)

    def test_identity_slab_gives_isotropic_error(self, rng):
        prior = PriorParams(0.1, np.eye(3))
        state = SeMatrixState(Gamma=0.1 * np.eye(3), Sigma=0.2 * np.eye(3), mc_samples=400_000)
        out = se_step_matrix(state, prior, 0.5, 0.0, rng)
        off = out.Gamma - np.diag(np.diag(out.Gamma))
        # off-diagonals vanish in distribution; allow 3 MC standard errors
        assert np.abs(off).max() < 3 * 1.0 / np.sqrt(400_000)
        diag = np.diag(out.Gamma)
        assert np.ptp(diag) < 6 * 1.0 / np.sqrt(400_000)

    def test_first_step_matches_solver_initialization(self, rng):
        prior = PriorParams(0.1, np.eye(3))
        cfg = ModelConfig(N=100, M=50, J=3, d=20, prior=prior, sigma2=2e-4, seed=0)
        phi, _, meas = gen_instance(cfg)
        amp_state = amp_init(phi, meas, prior)
        gamma1 = prior.epsilon * prior.slab_cov
        se_state = SeMatrixState(Gamma=gamma1, Sigma=2e-4 * np.eye(3) + gamma1 / 0.5)
        npt.assert_allclose(se_state.Sigma, amp_state.Sigma, rtol=1e-12)

    def test_low_sample_warning(self, rng):
        prior = PriorParams(0.5, np.eye(2))
        state = SeMatrixState(Gamma=np.eye(2), Sigma=np.eye(2), mc_samples=50)
        out = se_step_matrix(state, prior, 1.0, 0.0, rng)
        assert out.low_sample_warning

    def test_tracks_empirical_amp_through_transient(self):
        # the matrix recursion keeps the full posterior covariance and stays
        # within a few tens of percent of the measured error at every sweep
        prior = PriorParams(0.1, np.eye(3))
        sigma2 = 2e-4
        mses = []
        for trial in range(5):
            cfg = ModelConfig(N=2000, M=1000, J=3, d=100, prior=prior, sigma2=sigma2, seed=50 + trial)
            phi, sig, meas = gen_instance(cfg)
            power = np.sum(sig.X**2) / sig.X.size
            res = amp_solve(phi, meas, prior, AmpConfig(12, 1e-12), truth=sig.X)
            tr = [power * 10 ** (rec.nse_db / 10.0) for rec in res.iterations]
            mses.append(tr + [tr[-1]] * (13 - len(tr)))
        mean_mse = np.mean(mses, axis=0)
        rng = np.random.default_rng(1)
        state = SeMatrixState(
            Gamma=0.1 * np.eye(3), Sigma=(sigma2 + 0.2) * np.eye(3), mc_samples=100_000
        )
        for i in range(10):
            c_emp = sigma2 + mean_mse[i] / 0.5
            c_pred = np.trace(state.Sigma) / 3
            assert abs(c_pred - c_emp) / c_pred < 0.5
            state = se_step_matrix(state, prior, 0.5, sigma2, rng)


class TestMeanWeight:
    def test_matched_expectation_is_sparsity(self, rng):
        est, stderr = mean_weight_check(0.1, 0.1, 3, 100_000, rng)
        assert abs(est - 0.1) <= 3 * stderr
        est, stderr = mean_weight_check(0.5, 1.0, 1, 100_000, rng)
        assert abs(est - 0.5) <= 3 * stderr

    def test_large_sample_band(self, rng):
        est, _ = mean_weight_check(0.1, 0.2, 3, 10_000, rng)
        assert 0.09 <= est <= 0.11

    def test_degenerate_full_support(self, rng):
        est, stderr = mean_weight_check(1.0, 0.5, 2, 100, rng)
        assert est == 1.0 and stderr == 0.0

    def test_rejects_bad_arguments(self, rng):
        with pytest.raises(ValueError):
            mean_weight_check(0.0, 0.1, 1, 10, rng)
        with pytest.raises(ValueError):
            mean_weight_check(0.1, 0.0, 1, 10, rng)
