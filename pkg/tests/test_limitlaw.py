import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marytree.errors import ValidationError
from marytree.limitlaw import (carleman_growth_check, contraction_factor, dirichlet_moment, fixed_point_residual,
                               g1_closed, g2_closed, g_moments, g_moments_direct, limit_consistency, sample_Y,
                               sample_Y_stats, sigma2_borderline, sigma2_small, spacings, summary_normalization,
                               truncated_second_moment)
from marytree.model import make_toll, parse_toll, stream_rng
from marytree.moments import exact_variance


class TestDirichlet:
    def test_examples(self):
        assert dirichlet_moment(2, [1, 0]) == pytest.approx(0.5)
        assert dirichlet_moment(2, [1, 1]) == pytest.approx(1 / 6)
        assert dirichlet_moment(3, [2, 0, 0]) == pytest.approx(1 / 6)

    def test_rejects(self):
        with pytest.raises(ValidationError):
            dirichlet_moment(2, [-1, 0])
        with pytest.raises(ValidationError):
            dirichlet_moment(3, [1, 0])

    @pytest.mark.parametrize("m,beta", [(2, 0.75), (3, 2.0), (5, 1.5)])
    def test_spacings_monte_carlo(self, m, beta):
        S = spacings(m, 200_000, stream_rng(9, 0))
        assert np.allclose(S.sum(axis=1), 1) and np.all(S >= 0)
        assert np.allclose(S.mean(axis=0), 1 / m, atol=4 * S.std() / math.sqrt(len(S)))
        x = S[:, 0] ** beta
        assert abs(x.mean() - dirichlet_moment(m, [beta] + [0] * (m - 1))) <= 3 * x.std() / math.sqrt(len(x))


class TestMoments:
    def test_m2_beta2(self):
        p = g_moments(2, 2.0, 4)
        assert p.g[0] == 1
        assert p.g[1] == pytest.approx(3, rel=1e-12)
        assert p.g[2] == pytest.approx(28 / 3, rel=1e-12)
        assert p.rho2 == pytest.approx(0.4)

    def test_moderate_sign(self):
        assert g_moments(2, 0.75, 2).g[1] == pytest.approx(-7, rel=1e-12)
        for m in (2, 3, 5, 8):
            assert g_moments(m, 0.8, 1).g[1] < 0

    def test_g1_forms_agree(self):
        for m in range(2, 11):
            for beta in (0.6, 0.75, 0.9, 1.5, 2.0, 3.0):
                a, b = g1_closed(m, beta)
                assert a == pytest.approx(b, rel=1e-10)

    @pytest.mark.parametrize("m", range(2, 11))
    @pytest.mark.parametrize("beta", [0.6, 0.75, 0.9, 1.5, 2.0, 3.0])
    def test_g2_closed_and_positive_variance(self, m, beta):
        p = g_moments(m, beta, 2)
        assert p.g[2] == pytest.approx(g2_closed(m, beta), rel=1e-10)
        assert p.variance > 0

    @pytest.mark.parametrize("m,beta,K", [(2, 2.0, 8), (3, 1.7, 6), (4, 0.75, 5), (3, 0.6, 5)])
    def test_direct_enumeration(self, m, beta, K):
        np.testing.assert_allclose(g_moments(m, beta, K).g, g_moments_direct(m, beta, K), rtol=1e-10)

    @pytest.mark.parametrize("m,beta", [(2, 2.0), (3, 0.75), (6, 1.3), (4, 3.0)])
    def test_fixed_point(self, m, beta):
        assert fixed_point_residual(g_moments(m, beta, 8)) < 1e-9

    @pytest.mark.parametrize("bad", [0.5, 0.4, 1.0])
    def test_rejects_beta(self, bad):
        with pytest.raises(ValidationError):
            g_moments(3, bad, 2)

    def test_rejects_k_beta_one(self):
        with pytest.raises(ValidationError, match="k=2"):
            g_moments(3, 0.5 + 1e-13, 3)

    def test_k_cap(self):
        with pytest.raises(ValidationError):
            g_moments(2, 2.0, 17)


class TestContraction:
    def test_values(self):
        assert contraction_factor(2, 2.0)[0] == pytest.approx(0.4)
        assert contraction_factor(3, 1.0) == (pytest.approx(0.5), True)
        for m in (2, 5, 9):
            rho2, ok = contraction_factor(m, 0.5)
            assert rho2 == pytest.approx(1.0) and not ok

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 40), st.floats(0.51, 5))
    def test_below_one_above_half(self, m, beta):
        assert contraction_factor(m, beta)[1]


class TestCarleman:
    @pytest.mark.parametrize("m,beta,K", [(2, 2.0, 12), (2, 0.75, 10)])
    def test_bounded(self, m, beta, K):
        rep = carleman_growth_check(g_moments(m, beta, K))
        assert rep.bounded
        assert all(r <= rep.M + 1e-12 for r in rep.gamma_root)

    def test_k1(self):
        rep = carleman_growth_check(g_moments(2, 2.0, 1))
        assert rep.bounded and rep.M == pytest.approx(3)


class TestSampler:
    def test_depth_zero(self):
        assert sample_Y(2, 2.0, 0, stream_rng(0)) == pytest.approx(3)

    def test_moments_depth20(self):
        st_ = sample_Y_stats(2, 2.0, 20, 100_000, seed=3, num_streams=2)
        assert abs(st_.mean - 3) <= 3 * st_.mean_se
        assert abs(st_.second - 28 / 3) <= 3 * st_.second_se

    def test_variance_approaches_limit(self):
        # Var Y_d = (g2 - g1^2)(1 - rho^(2d)): monotone in d, geometric ratio rho^2
        p = g_moments(2, 2.0, 2)
        limit = p.variance
        var, se = [], []
        for d in (2, 4, 8, 16):
            x = sample_Y(2, 2.0, d, stream_rng(1, d), size=100_000)
            dev = (x - x.mean()) ** 2
            var.append(dev.mean())
            se.append(dev.std() / math.sqrt(x.size))
        assert var[0] < var[1] < var[2]
        assert abs(var[3] - limit) <= 4 * se[3]
        for d, v, e in zip((2, 4), var, se):
            assert abs(v - limit * (1 - p.rho2 ** d)) <= 4 * e
        assert truncated_second_moment(p, 2) < truncated_second_moment(p, 4) < p.g[2]

    def test_truncated_oracle(self):
        # without pruning, E Y_d^2 = g2 - rho^(2d) (g2 - g1^2)
        p = g_moments(2, 2.0, 2)
        x = sample_Y(2, 2.0, 3, stream_rng(5), size=200_000, tol=0.0)
        se = np.std(x ** 2) / math.sqrt(x.size)
        assert abs(np.mean(x ** 2) - truncated_second_moment(p, 3)) <= 4 * se

    def test_deterministic(self):
        a = sample_Y_stats(3, 0.75, 10, 3000, seed=4, num_streams=3)
        b = sample_Y_stats(3, 0.75, 10, 3000, seed=4, num_streams=3)
        assert a.to_dict() == b.to_dict()


class TestVarianceConstants:
    def test_borderline_m2(self):
        assert sigma2_borderline(2) == pytest.approx(4.5 * math.pi - 14, rel=1e-12)
        assert sigma2_borderline(2) == pytest.approx(0.13717, abs=1e-5)

    def test_borderline_positive(self):
        assert all(sigma2_borderline(m) > 0 for m in range(2, 27))
        with pytest.raises(ValidationError):
            sigma2_borderline(27)

    def test_small_degenerate_and_zero(self):
        assert sigma2_small(4, parse_toll("degenerate:t=2", 4), N_tail=300).value == pytest.approx(0, abs=1e-12)
        assert sigma2_small(3, make_toll(3, "constant", value=0, initial=[0, 0]), N_tail=100).value == 0

    def test_small_shape(self):
        s2 = sigma2_small(3, parse_toll("shape", 3), N_tail=8000).value
        v = exact_variance(3, parse_toll("shape", 3), N=2000)
        assert s2 > 0
        assert v[2000] / 2000 == pytest.approx(s2, rel=0.02)
        assert v[1000] / 1000 == pytest.approx(s2, rel=0.02)

    def test_small_rejects_large_toll(self):
        with pytest.raises(ValidationError):
            sigma2_small(3, parse_toll("path-length", 3))


class TestSummary:
    def test_normal(self):
        d = summary_normalization(3, "small-a")
        assert d.law == "normal"

    def test_large(self):
        d = summary_normalization(2, "large", 2.0)
        assert d.law == "fixed-point"
        assert d.scale == pytest.approx((28 / 3) ** -0.5)
        assert d.standardized_scale == pytest.approx(3 ** 0.5)

    def test_moderate_gate(self):
        assert summary_normalization(57, "moderate", 0.75).law == "fixed-point"
        d = summary_normalization(58, "moderate", 0.75)
        assert d.law == "periodic" and d.m0 == 57

    def test_small_periodic(self):
        assert summary_normalization(27, "small-b").law == "periodic"

    def test_rejects(self):
        with pytest.raises(ValidationError):
            summary_normalization(3, "moderate", 1.5)
        with pytest.raises(ValidationError):
            summary_normalization(3, "weird")


class TestConsistency:
    def test_large(self):
        rep = limit_consistency(2, 2.0, N=10_000, K=2)
        rows = {(n, k): (r, g) for n, k, r, g in rep.rows}
        assert rows[(10_000, 0)][0] == 1
        r, g = rows[(10_000, 1)]
        assert abs(r - 3) / 3 <= 0.01
        g2 = rows[(10_000, 2)][1]
        assert abs(rows[(10_000, 2)][0] - g2) < abs(rows[(2500, 2)][0] - g2)
        assert rep.form == "raw" and rep.note

    def test_moderate(self):
        rep = limit_consistency(2, 0.75, N=8000, K=2)
        rows = {(n, k): (r, g) for n, k, r, g in rep.rows}
        assert rows[(8000, 1)][0] == pytest.approx(-7, rel=0.02)
        assert rep.form == "centered"
