import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marytree.errors import ValidationError
from marytree.indicial import (alpha, alpha_table, build_indicial, c1_closed_form, check_identities,
                               ett_constants, find_roots, m0, psi, psi_derivative, rising_coeffs,
                               second_root_log_branch)
from marytree.moments import harmonic


def stirling1_unsigned(n, k):
    return abs(int(mpmath.stirling1(n, k)))


class TestPolynomial:
    @pytest.mark.parametrize("m,coeffs", [(2, (-2, 1)), (3, (-6, 1, 1)), (4, (-24, 2, 3, 1))])
    def test_small(self, m, coeffs):
        assert build_indicial(m).coeffs == coeffs

    @pytest.mark.parametrize("m", range(2, 21))
    def test_stirling_and_root_two(self, m):
        c = build_indicial(m).coeffs
        for j in range(1, m):
            assert c[j] == stirling1_unsigned(m - 1, j)
        assert c[0] == -math.factorial(m)
        assert psi(m, 2) == 0
        assert sum(v * 2 ** j for j, v in enumerate(c)) == 0

    def test_rising_coeffs(self):
        assert rising_coeffs(3) == [0, 2, 3, 1]

    def test_derivative_values(self):
        assert psi_derivative(2, 2) == 1
        assert psi_derivative(3, 2) == 5
        for m in range(2, 31):
            H, H2 = harmonic(m, exact=True), harmonic(m, 2, exact=True)
            assert psi_derivative(m, 2) == math.factorial(m) * (H - 1)
            assert psi_derivative(m, 2, order=2) == math.factorial(m) * ((H - 1) ** 2 - (H2 - 1))

    @pytest.mark.parametrize("m", [3, 8, 20])
    def test_second_derivative_numerical(self, m):
        f = lambda z: mpmath.rf(z, m - 1) - mpmath.factorial(m)
        num = mpmath.diff(f, 2, 2)
        assert float(psi_derivative(m, 2.0 + 0j, order=2).real) == pytest.approx(float(num), rel=1e-8)


class TestRoots:
    def test_m2(self):
        assert np.allclose(find_roots(2).roots, [2])

    def test_m3(self):
        assert np.allclose(find_roots(3).roots, [2, -3])

    def test_m4(self):
        r = find_roots(4).roots
        z = (-5 + 1j * math.sqrt(23)) / 2
        assert np.allclose(r, [2, z, z.conjugate()])
        assert alpha(4) == pytest.approx(-2.5)

    @pytest.mark.parametrize("m", range(2, 41))
    def test_structure(self, m):
        rs = find_roots(m)
        r = rs.roots
        assert r[0] == 2
        assert len(r) == m - 1
        assert np.max(rs.residuals) < 1e-10
        # conjugate closure and distinct real parts across non-conjugate roots
        assert np.allclose(np.sort_complex(r), np.sort_complex(r.conj()))
        assert min(abs(a - b) for i, a in enumerate(r) for b in r[i + 1:]) > 1e-6 if m > 2 else True
        assert np.any(np.isclose(r, -m)) == (m % 2 == 1)
        assert all(z.real < 2 for z in r[1:])

    def test_sort_tie_break(self):
        r = find_roots(6).roots
        assert r[1].imag > 0 and r[2] == r[1].conjugate()

    def test_alpha_values(self):
        assert alpha(10) == pytest.approx(0.5685, abs=1e-4)
        assert alpha(26) < 1.5 < alpha(27)

    def test_alpha_table_increasing(self):
        tab = alpha_table(40)
        a = [row[1] for row in tab]
        assert all(y > x for x, y in zip(a, a[1:]))
        assert all(row[1] < 2 for row in tab)

    @pytest.mark.parametrize("m", [6, 15, 30, 40])
    def test_log_branch_agrees(self, m):
        assert second_root_log_branch(m) == pytest.approx(find_roots(m).second, abs=1e-9)

    def test_large_m(self):
        rs = find_roots(10_000)
        assert rs.method == "log-branch" and len(rs.roots) == 3
        assert 1.9 < rs.alpha < 2

    @pytest.mark.parametrize("beta,expected", [(0.6, 33), (0.75, 57), (0.9, 220)])
    def test_m0(self, beta, expected):
        assert m0(beta) == expected

    def test_m0_beta_ge_one(self):
        assert m0(1.2) is None

    def test_rejects(self):
        with pytest.raises(ValidationError):
            find_roots(1)
        with pytest.raises(ValidationError):
            alpha(2)


class TestIdentities:
    def test_partial_fractions_m2(self):
        # 1/psi(5) = 1/3 for m = 2
        assert psi(2, 5) == 3

    def test_b4_m3(self):
        # 1/((lam-2) psi'(lam)) at lam = -3 equals the harmonic expression; H_3^(2) - 1 = 13/36
        lhs = Fraction(1, (-3 - 2) * psi_derivative(3, -3))
        H, H2 = harmonic(3, exact=True), harmonic(3, 2, exact=True)
        rhs = Fraction(1, 2 * 6) * (1 - (H2 - 1) / (H - 1) ** 2)
        assert lhs == rhs == Fraction(1, 25)

    @pytest.mark.parametrize("m", range(2, 21))
    def test_all_identities(self, m):
        rep = check_identities(m)
        assert rep.worst < 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 15), st.floats(-6, 6), st.floats(-6, 6))
    def test_partial_fraction_random_points(self, m, x, y):
        z = complex(x, y)
        if abs(psi(m, z)) < 1e-3:
            return
        rs = find_roots(m)
        lhs = np.sum(rs.inv_weights / (z - rs.roots))
        assert lhs == pytest.approx(math.factorial(m) / psi(m, z), rel=1e-8)


class TestConstants:
    def test_m2(self):
        assert ett_constants(2, [5])[0] == pytest.approx(5)
        assert c1_closed_form(2, [5], exact=True) == 5

    def test_m3(self):
        assert c1_closed_form(3, [0, 1], exact=True) == Fraction(1, 5)
        assert ett_constants(3, [0, 1])[0] == pytest.approx(0.2)

    def test_zero(self):
        assert np.all(ett_constants(5, [0, 0, 0, 0]) == 0)

    @pytest.mark.parametrize("m", range(2, 11))
    def test_c1_matches(self, m):
        init = np.random.default_rng(m).standard_normal(m - 1)
        assert ett_constants(m, init)[0].real == pytest.approx(c1_closed_form(m, init), rel=1e-12, abs=1e-14)
