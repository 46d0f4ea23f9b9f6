"""Tests for the diagonal Gaussian and Dirac distribution layer."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metabounds.audit import quadrature_kl_1d
from metabounds.gauss import (
    DiagonalGaussian,
    DiracDistribution,
    expected_kl_under_gaussian_mean,
    isotropic,
    kl_diag_gaussian,
    kl_dirac,
    sample,
)


def gauss_1d(mean, var):
    return DiagonalGaussian(np.array([mean]), np.array([np.log(var)]))


class TestDiagonalGaussian:
    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            DiagonalGaussian(np.zeros(3), np.zeros(2))

    def test_rejects_nonfinite_log_var(self):
        with pytest.raises(ValueError):
            DiagonalGaussian(np.zeros(2), np.array([0.0, np.inf]))

    def test_rejects_empty_vector(self):
        with pytest.raises(ValueError):
            DiagonalGaussian(np.zeros(0), np.zeros(0))

    def test_var_and_std_follow_log_var(self):
        d = DiagonalGaussian(np.zeros(2), np.log(np.array([4.0, 9.0])))
        np.testing.assert_allclose(d.var, [4.0, 9.0])
        np.testing.assert_allclose(d.std, [2.0, 3.0])


class TestKlDiagGaussian:
    def test_identical_distributions_give_exact_zero(self):
        q = isotropic(np.zeros(3), 1.0)
        assert kl_diag_gaussian(q, q) == 0.0

    def test_unit_mean_shift_is_half(self):
        """KL(N(1,1) || N(0,1)) = (mu difference)^2 / 2 = 0.5."""
        np.testing.assert_allclose(
            kl_diag_gaussian(gauss_1d(1.0, 1.0), gauss_1d(0.0, 1.0)), 0.5
        )

    def test_variance_ratio_example(self):
        """KL(N(0, 1/e) || N(0, 1)) = e^-1 / 2."""
        got = kl_diag_gaussian(gauss_1d(0.0, np.exp(-1.0)), gauss_1d(0.0, 1.0))
        np.testing.assert_allclose(got, np.exp(-1.0) / 2.0, rtol=1e-12)

    def test_variance_ratio_example_matches_quadrature(self):
        q = gauss_1d(0.0, np.exp(-1.0))
        p = gauss_1d(0.0, 1.0)
        assert abs(kl_diag_gaussian(q, p) - quadrature_kl_1d(q, p)) < 1e-6

    def test_additivity_over_coordinates(self):
        rng = np.random.default_rng(7)
        mq, mp_ = rng.normal(size=4), rng.normal(size=4)
        lq, lp = rng.normal(size=4), rng.normal(size=4)
        q = DiagonalGaussian(mq, lq)
        p = DiagonalGaussian(mp_, lp)
        per_coord = sum(
            kl_diag_gaussian(
                DiagonalGaussian(mq[i : i + 1], lq[i : i + 1]),
                DiagonalGaussian(mp_[i : i + 1], lp[i : i + 1]),
            )
            for i in range(4)
        )
        np.testing.assert_allclose(kl_diag_gaussian(q, p), per_coord, rtol=1e-12)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            kl_diag_gaussian(isotropic(np.zeros(2), 1.0), isotropic(np.zeros(3), 1.0))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_nonnegative_on_random_pairs(self, idx):
        rng = np.random.default_rng(idx)
        d = int(rng.integers(1, 6))
        q = DiagonalGaussian(3.0 * rng.normal(size=d), rng.normal(size=d))
        p = DiagonalGaussian(3.0 * rng.normal(size=d), rng.normal(size=d))
        assert kl_diag_gaussian(q, p) >= 0.0

    def test_zero_only_for_equal_parameters(self):
        q = gauss_1d(0.0, 1.0)
        p = gauss_1d(1e-4, 1.0)
        assert kl_diag_gaussian(q, p) > 0.0


class TestDirac:
    def test_matching_points_give_zero(self):
        a = DiracDistribution(np.array([1.0, 2.0]))
        b = DiracDistribution(np.array([1.0, 2.0]))
        assert kl_dirac(a, b) == 0.0

    def test_mismatched_points_raise(self):
        a = DiracDistribution(np.array([1.0, 2.0]))
        b = DiracDistribution(np.array([1.0, 2.5]))
        with pytest.raises(ValueError):
            kl_dirac(a, b)


class TestSample:
    def test_near_degenerate_variance_returns_mean(self):
        d = DiagonalGaussian(np.array([3.0, -1.0]), np.full(2, -60.0))
        x = sample(d, np.random.default_rng(0))
        np.testing.assert_allclose(x, d.mean, atol=1e-10)

    def test_same_seed_same_draw(self):
        d = isotropic(np.zeros(5), 2.0)
        x1 = sample(d, np.random.default_rng(123))
        x2 = sample(d, np.random.default_rng(123))
        np.testing.assert_array_equal(x1, x2)

    def test_empirical_mean_matches(self):
        d = isotropic(np.zeros(2), 1.0)
        rng = np.random.default_rng(42)
        draws = np.array([sample(d, rng) for _ in range(100_000)])
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)

    def test_empirical_variance_within_5_percent(self):
        d = DiagonalGaussian(np.array([1.0, -2.0]), np.log(np.array([0.5, 3.0])))
        rng = np.random.default_rng(9)
        draws = np.array([sample(d, rng) for _ in range(100_000)])
        np.testing.assert_allclose(draws.var(axis=0), d.var, rtol=0.05)


class TestExpectedKlUnderGaussianMean:
    def test_degenerate_hyper_reduces_to_plain_kl(self):
        rng = np.random.default_rng(3)
        q = DiagonalGaussian(rng.normal(size=3), rng.normal(size=3))
        hyper = DiagonalGaussian(rng.normal(size=3), np.full(3, np.log(1e-30)))
        direct = kl_diag_gaussian(q, isotropic(hyper.mean, 4.0))
        assert abs(expected_kl_under_gaussian_mean(q, hyper, 4.0) - direct) < 1e-10

    def test_matched_q_leaves_only_hyper_spread(self):
        """With q = N(0, sp^2) and hyper = N(0, s^2), the value is s^2/(2 sp^2)."""
        sp2 = 7.0
        s2 = 3.0
        q = isotropic(np.zeros(1), sp2)
        hyper = isotropic(np.zeros(1), s2)
        np.testing.assert_allclose(
            expected_kl_under_gaussian_mean(q, hyper, sp2), s2 / (2.0 * sp2), rtol=1e-12
        )

    def test_two_dim_worked_example(self):
        # d = 2, sigma_P = 10, hyper spread 4, q matching the prior scale
        q = isotropic(np.zeros(2), 100.0)
        hyper = isotropic(np.zeros(2), 4.0)
        np.testing.assert_allclose(
            expected_kl_under_gaussian_mean(q, hyper, 100.0), 2.0 * 4.0 / 200.0
        )

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(11)
        q = DiagonalGaussian(rng.normal(size=2), rng.normal(size=2))
        hyper = DiagonalGaussian(rng.normal(size=2), np.log([0.5, 2.0]))
        prior_var = 6.0
        total = 0.0
        n = 100_000
        mus = hyper.mean + hyper.std * rng.standard_normal((n, 2))
        for k in range(0, n, 1000):
            batch = mus[k : k + 1000]
            total += sum(
                kl_diag_gaussian(q, isotropic(mu, prior_var)) for mu in batch
            )
        mc = total / n
        closed = expected_kl_under_gaussian_mean(q, hyper, prior_var)
        assert abs(closed - mc) / closed < 0.02

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            expected_kl_under_gaussian_mean(
                isotropic(np.zeros(2), 1.0), isotropic(np.zeros(3), 1.0), 1.0
            )
