import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marytree.errors import ValidationError
from marytree.model import (build_tree, eval_functional, exhaustive_exact_moments, exhaustive_moments,
                            make_toll, monte_carlo_moments, parse_toll, shape_prob, subtree_sizes)
from marytree.moments import exact_mean

EXAMPLE_A = (10, 7, 12, 4, 1, 8, 5, 6, 9, 14, 11, 2, 15, 13, 3)
EXAMPLE_B = (7, 10, 12, 1, 4, 8, 5, 6, 9, 14, 11, 2, 15, 13, 3)


class TestTolls:
    def test_builtin_rules(self):
        n = np.arange(8)
        assert np.all(parse_toll("constant", 3).rule(n)[2:] == 1)
        assert np.allclose(parse_toll("path-length", 3).rule(n)[2:], n[2:] - 2)
        assert np.allclose(parse_toll("shape", 3).rule(n)[2:], [math.log(math.comb(k, 2)) for k in n[2:]])
        p = parse_toll("power:beta=0.75,p=1", 3).rule(n)
        assert p[1] == 0
        assert p[5] == pytest.approx(5 ** 0.75 * math.log(5))

    def test_spec_round_trip(self):
        t = parse_toll("power:beta=0.75,p=1", 4)
        assert t.params == {"beta": 0.75, "p": 1.0}
        assert parse_toll(t.id, 4) == t

    def test_initial_override(self):
        t = parse_toll("constant:initial=1;2", 3)
        assert t.initial == (Fraction(1), Fraction(2))

    def test_custom_file(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("n,t\n0,0\n1,0\n2,5\n3,7\n")
        t = parse_toll(f"custom:file={f}", 2)
        assert list(t.values(3)) == [0, 0, 5, 7]
        with pytest.raises(ValidationError):
            t.values(4)

    @pytest.mark.parametrize("bad", ["nope", "power:beta=x", "constant:value"])
    def test_rejects(self, bad):
        with pytest.raises(ValidationError):
            parse_toll(bad, 3)

    def test_exact_values_rational_only(self):
        assert parse_toll("path-length", 2).exact_values(3) == [0, 0, 1, 2]
        with pytest.raises(ValueError):
            parse_toll("shape", 2).exact_values(3)


class TestTrees:
    def test_binary(self):
        t = build_tree(2, [2, 1, 3])
        assert t.root.keys == [2]
        assert [c.keys for c in t.root.children] == [[1], [3]]
        assert subtree_sizes(t) == (1, 1)

    def test_quaternary_example_equal(self):
        a, b = build_tree(4, EXAMPLE_A), build_tree(4, EXAMPLE_B)
        assert a.canonical() == b.canonical()
        assert sum(subtree_sizes(a)) == 12

    def test_small_tree_single_node(self):
        t = build_tree(4, [3, 1, 2])
        assert t.root.keys == [1, 2, 3] and all(c is None for c in t.root.children)

    def test_ternary_sizes(self):
        assert subtree_sizes(build_tree(3, [2, 4, 1, 3, 5])) == (1, 1, 1)

    def test_duplicates_rejected(self):
        with pytest.raises(ValidationError):
            build_tree(3, [1, 2, 2])

    def test_sizes_need_full_root(self):
        with pytest.raises(ValidationError):
            subtree_sizes(build_tree(4, [1, 2]))

    def test_functional(self):
        t = build_tree(2, [2, 1, 3])
        assert eval_functional(t, parse_toll("path-length", 2)) == 2
        assert eval_functional(t, parse_toll("shape", 2)) == pytest.approx(math.log(3))
        assert eval_functional(t, make_toll(2, "constant", value=0)) == 0

    def test_shape_prob(self):
        assert shape_prob(build_tree(3, [1])) == 1
        assert shape_prob(build_tree(2, [1, 2])) == Fraction(1, 2)
        assert shape_prob(build_tree(2, [2, 1, 3])) == Fraction(1, 3)

    @pytest.mark.parametrize("m,n", [(2, 5), (3, 6), (4, 6)])
    def test_shape_probs_match_counts(self, m, n):
        counts = {}
        for p in itertools.permutations(range(1, n + 1)):
            t = build_tree(m, p)
            counts[t.canonical()] = (counts.get(t.canonical(), (0, t))[0] + 1, t)
        total = math.factorial(n)
        for c, t in counts.values():
            assert shape_prob(t) == Fraction(c, total)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.permutations(list(range(1, 13))))
    def test_keys_preserved_and_shape_is_log_prob(self, m, keys):
        t = build_tree(m, keys)
        assert t.keys() == sorted(keys)
        f = eval_functional(t, parse_toll("shape", m))
        assert f == pytest.approx(-math.log(shape_prob(t)))


class TestSampling:
    def test_exhaustive_path_length(self):
        raw = exhaustive_exact_moments(2, 5, parse_toll("path-length", 2), k_max=2)
        assert raw[1] == Fraction(37, 5)  # 2(n+1)H_n - 4n at n = 5
        assert raw[2] == Fraction(283, 5)

    def test_single_sample(self):
        st_ = monte_carlo_moments(3, 10, parse_toll("shape", 3), num_samples=1, seed=4)
        assert st_.raw_se[0] is None and st_.num_samples == 1

    def test_n_zero(self):
        t = make_toll(3, "constant", initial=[7, 1])
        st_ = monte_carlo_moments(3, 0, t, num_samples=5)
        assert st_.mean == 7

    def test_monte_carlo_mean(self):
        toll = parse_toll("shape", 3)
        st_ = monte_carlo_moments(3, 10, toll, num_samples=100_000, seed=11, num_streams=4, threads=2)
        exact = exact_mean(3, toll, N=10)[10]
        assert abs(st_.mean - exact) <= 4 * st_.raw_se[0]

    def test_deterministic_across_threads(self):
        toll = parse_toll("path-length", 3)
        a = monte_carlo_moments(3, 50, toll, num_samples=3000, seed=5, num_streams=3, threads=1)
        b = monte_carlo_moments(3, 50, toll, num_samples=3000, seed=5, num_streams=3, threads=3)
        assert a.to_dict() == b.to_dict()

    def test_seed_changes_output(self):
        toll = parse_toll("path-length", 3)
        a = monte_carlo_moments(3, 50, toll, num_samples=500, seed=1)
        b = monte_carlo_moments(3, 50, toll, num_samples=500, seed=2)
        assert a.raw != b.raw

    def test_exhaustive_float_matches_exact(self):
        toll = parse_toll("path-length", 3)
        st_ = exhaustive_moments(3, 7, toll, k_max=2)
        ex = exhaustive_exact_moments(3, 7, toll, k_max=2)
        assert st_.raw[0] == pytest.approx(float(ex[1]), rel=1e-14)
        assert st_.raw[1] == pytest.approx(float(ex[2]), rel=1e-14)
