import numpy as np
import pytest

from conftest import random_theta, simulate_from_theta
from test_moments import _exact_count_dataset, _oracle_theta
from mislate.data import Dataset, Mode, ParamVector, cell_stats
from mislate.exceptions import NotOveridentified, RankDeficient, ValidationError
from mislate.gmm import (
    GmmConfig,
    confidence_intervals,
    estimate,
    j_test,
    param_names,
    sandwich_cov,
)
from mislate.identification import identify


class TestConfig:
    def test_rejects_unknown_weighting(self):
        with pytest.raises(ValueError):
            GmmConfig(weighting="three-step")

    def test_rejects_bad_level(self):
        with pytest.raises(ValueError):
            GmmConfig(ci_level=1.0)

    def test_rejects_nonpositive_tolerance(self):
        with pytest.raises(ValueError):
            GmmConfig(tol_grad=0.0)


class TestParamNames:
    def test_lengths(self):
        assert len(param_names(2, Mode.CASE_II)) == 11
        assert len(param_names(3, Mode.CASE_I)) == 15

    def test_case_ii_shares_m(self):
        names = param_names(2, Mode.CASE_II)
        assert names[:4] == ["beta_star", "delta_p_star", "r", "m0"]
        assert "m1" in names


class TestSandwich:
    def test_optimal_weight_collapses_to_efficient_form(self, rng):
        q, p = 11, 7
        G = rng.normal(size=(q, p))
        A = rng.normal(size=(q, q))
        omega = A @ A.T + np.eye(q)
        w = np.linalg.inv(omega)
        n = 500
        v = sandwich_cov(G, w, omega, n)
        np.testing.assert_allclose(v, np.linalg.inv(G.T @ w @ G) / n,
                                   atol=1e-12)

    def test_symmetric_psd(self, rng):
        G = rng.normal(size=(11, 7))
        A = rng.normal(size=(11, 11))
        omega = A @ A.T + np.eye(11)
        v = sandwich_cov(G, np.eye(11), omega, 200)
        np.testing.assert_allclose(v, v.T)
        assert np.all(np.linalg.eigvalsh(v) > 0)

    def test_rank_deficient_raises(self, rng):
        G = np.zeros((11, 7))
        G[:, :6] = rng.normal(size=(11, 6))
        with pytest.raises(RankDeficient):
            sandwich_cov(G, np.eye(11), np.eye(11), 100)

    def test_scales_inversely_with_n(self, rng):
        G = rng.normal(size=(11, 7))
        v1 = sandwich_cov(G, np.eye(11), np.eye(11), 100)
        v2 = sandwich_cov(G, np.eye(11), np.eye(11), 200)
        np.testing.assert_allclose(v1, 2.0 * v2)


class TestConfidenceIntervals:
    def test_hand_computed_95(self):
        # 0.421 +/- 1.959964 * 0.124
        ci = confidence_intervals(np.array([0.421]), np.array([[0.124 ** 2]]), 0.95)
        assert ci[0, 0] == pytest.approx(0.178, abs=5e-4)
        assert ci[0, 1] == pytest.approx(0.664, abs=5e-4)

    def test_level_ordering(self):
        wide = confidence_intervals(np.zeros(1), np.eye(1), 0.99)
        narrow = confidence_intervals(np.zeros(1), np.eye(1), 0.90)
        assert wide[0, 0] < narrow[0, 0] < narrow[0, 1] < wide[0, 1]


class TestEstimate:
    def test_rejects_invalid_dataset(self):
        ds = Dataset(y=np.zeros(4), t=np.array([0, 1, 0, 1]),
                     z=np.ones(4, dtype=int), v=np.array([0, 0, 1, 1]),
                     v_support=(0, 1), mode=Mode.CASE_II)
        with pytest.raises(ValidationError):
            estimate(ds)

    def test_noiseless_recovery(self):
        theta = _oracle_theta()
        ds = _exact_count_dataset(theta)
        est = estimate(ds)
        np.testing.assert_allclose(est.theta_flat, theta.pack(), atol=1e-8)
        assert est.objective < 1e-16
        assert est.converged

    def test_just_identified_matches_closed_form(self):
        # seed chosen so the closed form succeeds on this sample
        rng = np.random.default_rng(8)
        theta = random_theta(rng, Mode.CASE_II, 2)
        ds = simulate_from_theta(theta, 3000, rng)
        closed = identify(cell_stats(ds), Mode.CASE_II).theta
        est = estimate(ds)
        np.testing.assert_allclose(est.theta_flat, closed.pack(), atol=1e-6)
        assert est.j_dof == 0
        assert est.j_pvalue is None

    def test_two_step_equals_one_step_when_just_identified(self):
        rng = np.random.default_rng(8)
        theta = random_theta(rng, Mode.CASE_II, 2)
        ds = simulate_from_theta(theta, 3000, rng)
        a = estimate(ds, GmmConfig(weighting="identity"))
        b = estimate(ds, GmmConfig(weighting="optimal"))
        np.testing.assert_allclose(a.theta_flat, b.theta_flat, atol=1e-5)

    def test_duplication_fixes_point_and_halves_vcov(self):
        rng = np.random.default_rng(8)
        theta = random_theta(rng, Mode.CASE_II, 2)
        ds = simulate_from_theta(theta, 2000, rng)
        doubled = Dataset(
            y=np.concatenate([ds.y, ds.y]), t=np.concatenate([ds.t, ds.t]),
            z=np.concatenate([ds.z, ds.z]), v=np.concatenate([ds.v, ds.v]),
            v_support=ds.v_support, mode=ds.mode,
        )
        a, b = estimate(ds), estimate(doubled)
        np.testing.assert_allclose(a.theta_flat, b.theta_flat, atol=1e-8)
        # finite-difference noise in the Jacobian is amplified through the
        # sandwich, so the halving holds only to modest precision
        np.testing.assert_allclose(a.vcov, 2.0 * b.vcov, rtol=1e-3, atol=1e-3)

    def test_explicit_start_is_honoured(self):
        rng = np.random.default_rng(8)
        theta = random_theta(rng, Mode.CASE_II, 2)
        ds = simulate_from_theta(theta, 3000, rng)
        est = estimate(ds, GmmConfig(start=theta))
        closed = identify(cell_stats(ds), Mode.CASE_II).theta
        np.testing.assert_allclose(est.theta_flat, closed.pack(), atol=1e-6)

    def test_consistency_with_growing_n(self, rng):
        theta = random_theta(rng, Mode.CASE_II, 2)
        ds = simulate_from_theta(theta, 200_000, rng)
        est = estimate(ds)
        assert abs(est.theta_flat[0] - theta.beta_star) < 10 * est.se[0] + 0.05
        assert abs(float(est.theta_hat.m0[0]) - theta.m0[0]) < 0.05
        assert abs(float(est.theta_hat.m1[0]) - theta.m1[0]) < 0.05


def _calibration_theta():
    return ParamVector(
        beta_star=1.0, delta_p_star=0.4, r=0.5,
        m0=np.array([0.15, 0.15]), m1=np.array([0.15, 0.15]),
        p_star=np.array([[0.15, 0.35, 0.55], [0.55, 0.75, 0.9]]),
        tau_star=np.array([1.0, 1.0]), mode=Mode.CASE_II,
    )


class TestJTest:
    def test_just_identified_semantics(self, rng):
        theta = random_theta(rng, Mode.CASE_II, 2)
        ds = simulate_from_theta(theta, 2000, rng)
        est = estimate(ds)
        stat, dof, p = j_test(est)
        assert dof == 0 and p is None
        with pytest.raises(NotOveridentified):
            j_test(est, require_pvalue=True)

    def test_identity_weighting_overidentified_refuses_pvalue(self, rng):
        ds = simulate_from_theta(_calibration_theta(), 4000,
                                 np.random.default_rng(3))
        est = estimate(ds, GmmConfig(weighting="identity"))
        assert est.j_dof == 2
        with pytest.raises(ValidationError):
            j_test(est)

    def test_size_calibration(self):
        # overidentified model (K=3 shared-error mode, 2 degrees of freedom):
        # nominal 5% rejection under the null
        theta = _calibration_theta()
        rng = np.random.default_rng(7_2024)
        rej = 0
        reps = 200
        for _ in range(reps):
            ds = simulate_from_theta(theta, 4000, rng)
            est = estimate(ds, GmmConfig(weighting="optimal"))
            _, dof, p = j_test(est)
            assert dof == 2
            rej += p < 0.05
        assert 0.02 <= rej / reps <= 0.11

    def test_power_against_cell_varying_error(self):
        theta = _calibration_theta()
        rng = np.random.default_rng(11)
        rej = 0
        reps = 40
        for _ in range(reps):
            ds = simulate_from_theta(theta, 4000, rng, error_by_v=True)
            est = estimate(ds, GmmConfig(weighting="optimal"))
            _, _, p = j_test(est)
            rej += p < 0.05
        assert rej / reps > 0.5
