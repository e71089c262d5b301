import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marytree.errors import ValidationError
from marytree.indicial import find_roots
from marytree.model import parse_toll
from marytree.moments import harmonic, mean_slope, solve_basic_recurrence
from marytree.transfer import (att_predict, coeff_linear_form, converse_check, ett_solution, gamma_ratio,
                               linear_form_at_two, more_transfers_predict, periodicity_probe, pochhammer_coeff,
                               pochhammer_sequence, product_ratio, recurrence_input, relative_deviation,
                               verify_transfer)


class TestCoefficients:
    def test_linear_form_at_two(self):
        y = np.random.default_rng(0).standard_normal(50)
        y[0] = 0
        np.testing.assert_allclose(coeff_linear_form(2.0, y).real, linear_form_at_two(y), rtol=1e-12, atol=1e-12)

    def test_linear_form_unit_input(self):
        y = np.zeros(10)
        y[1] = 1.0
        w = coeff_linear_form(2.0, y).real
        assert w[1] == 0
        np.testing.assert_allclose(w[2:], (np.arange(2, 10) + 1) / 6)

    def test_linear_form_zero_and_rejects(self):
        assert np.all(coeff_linear_form(1.5 + 1j, np.zeros(8)) == 0)
        with pytest.raises(ValidationError):
            coeff_linear_form(2.0, [1.0, 0.0])

    def test_pochhammer(self):
        assert np.allclose(pochhammer_sequence(1.0, 10), 1)
        assert np.allclose(pochhammer_sequence(2.0, 10), np.arange(11) + 1)
        z = (-5 + 1j * math.sqrt(23)) / 2
        assert pochhammer_coeff(z, 3) == pytest.approx(z * (z + 1) * (z + 2) / 6)
        assert pochhammer_sequence(z, 3)[3] == pytest.approx(z * (z + 1) * (z + 2) / 6)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.9, 3), st.floats(-4, 4), st.integers(0, 20), st.integers(25, 200))
    def test_product_equals_gamma_ratio(self, x, y, k, n):
        lam = complex(x, y)
        assert product_ratio(lam, k, n) == pytest.approx(gamma_ratio(lam, k, n), rel=1e-10)


class TestExactTransfer:
    @pytest.mark.parametrize("m", range(2, 7))
    def test_matches_recurrence(self, m):
        rng = np.random.default_rng(m)
        roots = find_roots(m)
        for _ in range(20):
            b = rng.uniform(-1, 1, 301)
            res = ett_solution(m, b, roots)
            assert relative_deviation(res.a, solve_basic_recurrence(b, m)) <= 1e-8
            assert res.imag_residue <= 1e-8

    def test_zero_and_node_count(self):
        assert np.all(ett_solution(4, np.zeros(40)).a == 0)
        b = np.ones(40)
        b[0] = 0
        np.testing.assert_allclose(ett_solution(2, b).a, np.arange(40), atol=1e-10)

    def test_inverse(self):
        b = np.random.default_rng(3).standard_normal(200)
        np.testing.assert_allclose(recurrence_input(solve_basic_recurrence(b, 4), 4), b, atol=1e-9)


class TestAsymptotics:
    def test_linear_constant(self):
        t = parse_toll("constant", 2)
        K1 = float(mean_slope(2, t)) * (harmonic(2) - 1)
        assert K1 == pytest.approx(0.5)
        assert att_predict(2, "linear", K1=K1).leading == pytest.approx(1.0)

    def test_power_constant(self):
        assert att_predict(3, "power", K4=1.0, v=1.5).leading == pytest.approx(35 / 11, rel=1e-12)
        assert more_transfers_predict(2, "d", v=2.0, p=1.0).leading == pytest.approx(3.0)

    def test_nlogn_constants(self):
        p = att_predict(2, "nlogn", K2=1.0, h_sum=0.0)
        assert p.leading == pytest.approx(2.0)
        assert p.constants["K3"] == pytest.approx(-0.5)

    def test_nlogn_against_path_length(self):
        # b_n = n - 1 = (n+1) - 2: K2 = 1, h = -2 for n >= 1, h_0 = -1
        N = 4000
        b = np.arange(N + 1, dtype=float) - 1
        b[0] = 0
        h = b - (np.arange(N + 1) + 1)
        h_sum = float(np.sum(h / ((np.arange(N + 1) + 1) * (np.arange(N + 1) + 2)))) - 2 / (N + 2)
        rep = verify_transfer(2, b, att_predict(2, "nlogn", K2=1.0, h_sum=h_sum), [250, 1000, 4000])
        assert abs(rep.final_residual) < 1e-3 and rep.trend == 1.0

    def test_slow_case_coefficient(self):
        assert more_transfers_predict(2, "b", beta=0.75, K1=0.0).secondary == pytest.approx(-7.0)

    def test_slow_case_periodic(self):
        p = more_transfers_predict(40, "b", beta=0.6)
        assert not p.valid and p.regime == "periodic"
        with pytest.raises(ValidationError):
            p.predict(10)

    def test_linear_slow_consistent_with_nlogn(self):
        p = more_transfers_predict(3, "c", p=0.0)
        n = np.array([10, 100])
        np.testing.assert_allclose(p.predict(n), n * np.array([harmonic(10), harmonic(100)]) / (harmonic(3) - 1))

    def test_power_trend(self):
        N = 10_000
        b = np.arange(N + 1, dtype=float) ** 1.5
        rep = verify_transfer(3, b, att_predict(3, "power", K4=1.0, v=1.5), [1250, 2500, 5000, 10_000])
        assert rep.trend == 1.0
        # residual decays like n^(-1/2)
        r = [abs(row[3]) for row in rep.rows]
        assert r[-1] / r[0] == pytest.approx(math.sqrt(1250 / 10_000), rel=0.1)

    def test_zero_input_residual(self):
        p = att_predict(3, "power", K4=0.0, v=2.0)
        rep = verify_transfer(3, np.zeros(101), p, [50, 100])
        assert rep.final_residual == 0

    def test_converse(self):
        b = np.ones(2001)
        b[0] = 0
        rep = converse_check(2, solve_basic_recurrence(b, 2))
        assert rep.slope == pytest.approx(1.0)
        assert rep.partial_sums[-1][1] == pytest.approx(rep.target, rel=1e-3)


class TestPeriodicity:
    def test_m30_persists(self):
        rep = periodicity_probe(30, parse_toll("constant", 30), N=20_000)
        assert rep.ratio > 0.5 and rep.classification == "non-decaying"
        assert rep.empirical_omega == pytest.approx(rep.omega, rel=1e-2)

    def test_m10_decays(self):
        rep = periodicity_probe(10, parse_toll("constant", 10), N=20_000)
        amps = [w[2] for w in rep.windows]
        assert all(b < a for a, b in zip(amps, amps[1:]))
        assert rep.classification == "decaying"
        assert rep.ratio == pytest.approx(2 ** (rep.alpha - 1.5), rel=0.05)

    @pytest.mark.parametrize("m", [5, 12, 30])
    def test_cancellation_constant(self, m):
        rep = periodicity_probe(m, parse_toll("cancel:K=1", m), N=4000)
        assert rep.classification == "constant"
