import math
import os
import subprocess
import sys

import numpy as np
import pytest

from marytree import _kernels as K
from marytree.model import parse_toll
from marytree.moments import pascal_column, recurrence_weights

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def _inputs(N, m, seed=0):
    b = np.random.default_rng(seed).standard_normal(N + 1)
    return b, recurrence_weights(m, N), pascal_column(m, N)


@pytest.mark.parametrize("m", [2, 3, 5, 8])
def test_recurrence_paths_agree(m):
    b, w, kap = _inputs(400, m)
    ref = K.recurrence_dot(b, w, kap, m)
    np.testing.assert_allclose(K._recurrence_pascal(b, w, m), ref, rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(K._recurrence_naive(b, w, kap, m), ref, rtol=1e-11, atol=1e-11)


@needs_numba
@pytest.mark.parametrize("m", [2, 4, 7])
def test_numba_matches_numpy(m):
    b, w, kap = _inputs(2000, m, seed=m)
    np.testing.assert_allclose(K.recurrence_pascal_nb(b, w, m), K._recurrence_pascal(b, w, m), rtol=1e-12)
    np.testing.assert_allclose(K.recurrence_naive_nb(b, w, kap, m), K.recurrence_dot(b, w, kap, m), rtol=1e-11)
    y = np.random.default_rng(1).standard_normal(500)
    y[0] = 0
    lam = complex(-1.25, 2.4)
    np.testing.assert_allclose(K.linear_form_nb(lam, y), K.linear_form_np(lam, y), rtol=1e-11, atol=1e-12)


@needs_numba
def test_functional_rows_paths():
    m, n = 3, 60
    toll = parse_toll("shape", m)
    perms = np.argsort(np.random.default_rng(3).random((200, n)), axis=1) + 1
    t, base = toll.values(n), toll.base_values()
    np.testing.assert_allclose(K._functional_rows_nb(perms, m, t, base), K._functional_rows_py(perms, m, t, base))


def test_linear_form_series_oracle():
    # direct power-series product (1-z)^-lam * integral of (1-u)^(lam-1) Y(u)
    lam = 0.7 + 1.3j
    y = np.array([0, 1.0, -2.0, 0.5, 3.0, 0, 1.0])
    N = y.size - 1
    one_minus_pow = [1.0 + 0j]  # [z^k] (1-u)^(lam-1)
    for k in range(1, N + 1):
        one_minus_pow.append(one_minus_pow[-1] * (k - lam) / k)
    prod = np.convolve(one_minus_pow, y)[: N + 1]
    integ = np.concatenate([[0], prod[:-1] / np.arange(1, N + 1)])
    outer = [1.0 + 0j]
    for k in range(1, N + 1):
        outer.append(outer[-1] * (lam + k - 1) / k)
    expected = np.convolve(outer, integ)[: N + 1]
    np.testing.assert_allclose(K.linear_form(lam, y), expected, rtol=1e-12, atol=1e-12)


def test_pure_numpy_flag_subprocess():
    code = ("import marytree._kernels as K, numpy as np;"
            "from marytree.moments import solve_basic_recurrence as s;"
            "print(K.USE_NUMBA, repr(float(s(np.ones(50), 3)[-1])))")
    outs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, MARYTREE_PURE_NUMPY=flag)
        outs[flag] = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                    check=True).stdout.split()
    assert outs["1"][0] == "False"
    assert outs["0"][0] == str(K.HAVE_NUMBA)
    assert float(outs["1"][1]) == pytest.approx(float(outs["0"][1]), rel=1e-13)


def test_exhaustive_sum_fallback_matches():
    t = parse_toll("path-length", 2).values(6)
    saved = K.USE_NUMBA
    try:
        K.USE_NUMBA = False
        py = K.exhaustive_power_sums(6, 2, t, np.zeros(1), 2)
    finally:
        K.USE_NUMBA = saved
    assert py[0] == math.factorial(6)
    np.testing.assert_allclose(py, K.exhaustive_power_sums(6, 2, t, np.zeros(1), 2))
