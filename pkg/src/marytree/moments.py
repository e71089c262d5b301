"""Exact moments of additive functionals through the basic recurrence.

Every moment sequence a_n obeys

    a_n = b_n + m / C(n, m-1) * sum_j C(n-1-j, m-2) a_j,   n >= m-1,

with a_j = b_j below m-1.  Inputs b for higher orders are expectations over
the uniform law of the subtree-size composition (J_1..J_m); those are
reduced to convolutions with a single binomial kernel, since
P(J_1=j_1..J_s=j_s) depends on the j's only through their sum.

Two numeric modes: float64 and exact rationals (``exact=True``).
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import comb as _fcomb

from . import _kernels
from .errors import ValidationError
from .model import TollSequence, _as_fraction

K_CAP = 8


def harmonic(m: int, order: int = 1, exact: bool = False):
    if exact:
        return sum((Fraction(1, j ** order) for j in range(1, m + 1)), Fraction(0))
    return math.fsum(1.0 / j ** order for j in range(1, m + 1))


# ---------------------------------------------------------------------------
# recurrence engine
# ---------------------------------------------------------------------------

def recurrence_weights(m: int, N: int) -> np.ndarray:
    """w_n = m / C(n, m-1), zero below m-1."""
    n = np.arange(N + 1)
    w = np.zeros(N + 1)
    hi = n >= m - 1
    w[hi] = m / _fcomb(n[hi], m - 1)
    return w


def pascal_column(m: int, N: int) -> np.ndarray:
    """C(d, m-2) for d = 0..N: the weights of the basic recurrence's sum."""
    return _fcomb(np.arange(N + 1), m - 2)


def kernel(m: int, N: int, s: int = 1, exact: bool = False):
    """kappa_s(e) = C(e-s, m-1-s), the number of ways to finish a composition.

    For s = m the kernel is the indicator of e = m-1.
    """
    if exact:
        out = np.zeros(N + 1, dtype=object)
        for e in range(N + 1):
            if s == m:
                out[e] = 1 if e == m - 1 else 0
            elif e >= m - 1:
                out[e] = math.comb(e - s, m - 1 - s)
        return out
    e = np.arange(N + 1)
    if s == m:
        return (e == m - 1).astype(np.float64)
    out = np.zeros(N + 1)
    ok = e >= m - 1
    out[ok] = _fcomb(e[ok] - s, m - 1 - s)
    return out


def _is_exact(b) -> bool:
    return len(b) > 0 and all(isinstance(x, (Fraction, int)) and not isinstance(x, bool) for x in b)


def solve_basic_recurrence(b, m: int, exact: Optional[bool] = None, method: str = "pascal"):
    """Solve the basic recurrence for input b_0..b_N.

    ``exact`` defaults to True when every b_j is an int or Fraction.  The
    float path uses the O(N m) Pascal update (``method="naive"`` gives the
    O(N^2) weighted sum).
    """
    if m < 2:
        raise ValidationError("m must be >= 2")
    if exact is None:
        exact = _is_exact(b)
    N = len(b) - 1
    if N < 0:
        return [] if exact else np.zeros(0)
    if exact:
        b = [_as_fraction(x) for x in b]
        a = []
        S = [Fraction(0)] * (m - 1)  # S[r] = sum_j C(n-1-j, r) a_j
        for n in range(N + 1):
            if n > 0:
                for r in range(m - 2, 0, -1):
                    S[r] += S[r - 1]
                S[0] += a[n - 1]
            if n <= m - 2:
                a.append(b[n])
            else:
                a.append(b[n] + Fraction(m, math.comb(n, m - 1)) * S[m - 2])
        return a
    b = np.ascontiguousarray(b, dtype=np.float64)
    return _kernels.basic_recurrence(b, recurrence_weights(m, N), pascal_column(m, N), m, method)


# ---------------------------------------------------------------------------
# composition law
# ---------------------------------------------------------------------------

def enumerate_compositions(total: int, parts: int):
    """All tuples of ``parts`` nonnegative integers summing to ``total``."""
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield tuple(out)


def composition_marginal(m: int, n: int, s: int, exact: bool = False):
    """Joint probability of (J_1..J_s) as a function of their sum d = j_1+..+j_s.

    Entry d of the result is P(J_1=j_1, ..., J_s=j_s) for any tuple with
    sum d, namely C(n-d-s, m-1-s) / C(n, m-1); d runs over 0..n-m+1.
    """
    if not 1 <= s <= m - 1:
        raise ValidationError(f"s must satisfy 1 <= s <= m-1 (got s={s}, m={m})")
    if n < m - 1:
        raise ValidationError("n must be >= m-1")
    total = math.comb(n, m - 1)
    vals = [math.comb(n - d - s, m - 1 - s) for d in range(n - m + 2)]
    if exact:
        return [Fraction(v, total) for v in vals]
    return np.array(vals, dtype=np.float64) / float(total)


class _Backend:
    """Convolution-based expectations over the composition law, for all n <= N."""

    def __init__(self, m: int, N: int, exact: bool):
        self.m, self.N, self.exact = m, N, exact
        self._kern = {}
        if exact:
            self.binom = [math.comb(n, m - 1) for n in range(N + 1)]
        else:
            n = np.arange(N + 1)
            self.binom = np.where(n >= m - 1, _fcomb(n, m - 1), 1.0)

    def kern(self, s):
        if s not in self._kern:
            self._kern[s] = kernel(self.m, self.N, s, self.exact)
        return self._kern[s]

    def zeros(self):
        return [Fraction(0)] * (self.N + 1) if self.exact else np.zeros(self.N + 1)

    def conv(self, x, y):
        if self.exact:
            dx, nx = _common(x)
            dy, ny = _common(y)
            c = np.convolve(nx, ny)[: self.N + 1]
            return _Scaled(c, dx * dy)
        return np.convolve(x, y)[: self.N + 1]

    def expect(self, seqs):
        """E[prod_i seqs[i](J_i)] for each n (zero below m-1)."""
        s = len(seqs)
        if self.exact:
            acc = None
            for x in seqs:
                acc = x if acc is None else self.conv(acc, x).to_fractions()
            den, num = _common(acc)
            c = np.convolve(num, self.kern(s))[: self.N + 1]
            return [Fraction(int(c[n]), den * self.binom[n]) if n >= self.m - 1 else Fraction(0)
                    for n in range(self.N + 1)]
        acc = seqs[0]
        for x in seqs[1:]:
            acc = self.conv(acc, x)
        out = np.convolve(acc, self.kern(s))[: self.N + 1] / self.binom
        out[: self.m - 1] = 0.0
        return out


@dataclass
class _Scaled:
    num: np.ndarray
    den: int

    def to_fractions(self):
        return [Fraction(int(v), self.den) for v in self.num]


def _common(x):
    """Integer numerators over a common denominator."""
    if isinstance(x, _Scaled):
        return x.den, x.num
    den = 1
    for v in x:
        den = math.lcm(den, v.denominator)
    num = np.empty(len(x), dtype=object)
    for i, v in enumerate(x):
        num[i] = v.numerator * (den // v.denominator)
    return den, num


# ---------------------------------------------------------------------------
# means
# ---------------------------------------------------------------------------

def _toll_and_base(toll: TollSequence, base_values, N: int, exact: bool):
    m = toll.m
    if exact:
        t = toll.exact_values(N)
        base = [_as_fraction(v) for v in (toll.initial if base_values is None else base_values)]
    else:
        t = toll.values(N)
        base = np.array([float(v) for v in (toll.initial if base_values is None else base_values)])
    if len(base) != m - 1:
        raise ValidationError(f"need {m - 1} base values")
    return t, base


def _input_sequence(t, base, m, exact):
    b = list(t) if exact else np.array(t, dtype=np.float64)
    for j in range(min(m - 1, len(b))):
        b[j] = base[j]
    return b


def exact_mean(m, toll: TollSequence, base_values=None, N: int = 100, exact: bool = False):
    """Mean of f over random trees of size n = 0..N (b_n = t_n, b_j = base_j)."""
    _check_m(m, toll)
    t, base = _toll_and_base(toll, base_values, N, exact)
    return solve_basic_recurrence(_input_sequence(t, base, m, exact), m, exact=exact)


def _check_m(m, toll):
    if m < 2:
        raise ValidationError("m must be >= 2")
    if toll.m != m:
        raise ValidationError(f"toll built for m={toll.m}, asked for m={m}")


_EVENTUALLY_CONSTANT = ("constant", "degenerate", "cancel")


def _converges(toll: TollSequence) -> bool:
    if toll.kind in _EVENTUALLY_CONSTANT or toll.kind == "shape":
        return True
    if toll.kind == "power":
        beta, p = toll.params["beta"], toll.params["p"]
        return beta < 1 or (beta == 1 and p < -1)
    return False


def mean_slope(m, toll: TollSequence, base_values=None, exact: bool = False, J: int = 200_000):
    """mu = K_1 / (H_m - 1) with K_1 = sum_j b_j / ((j+1)(j+2)).

    Returns None when the series diverges (or cannot be judged, for custom
    tolls).  Exact values are available for eventually-constant tolls.
    """
    _check_m(m, toll)
    if not _converges(toll):
        return None
    base = toll.initial if base_values is None else base_values
    if toll.kind in _EVENTUALLY_CONSTANT:
        tail = _as_fraction(toll.exact_values(m - 1)[m - 1])
        K1 = sum((_as_fraction(base[j]) / ((j + 1) * (j + 2)) for j in range(m - 1)), Fraction(0))
        K1 += tail / m  # sum_{j >= m-1} 1/((j+1)(j+2)) = 1/m
        mu = K1 / (harmonic(m, exact=True) - 1)
        return mu if exact else float(mu)
    if exact:
        return None
    t = toll.values(J)
    t[: m - 1] = [float(v) for v in base]
    j = np.arange(J + 1, dtype=np.float64)
    head = math.fsum(t / ((j + 1) * (j + 2)))

    def g(u):
        # integrand after x = 1/u, so the range is finite
        if u == 0.0:
            return 0.0
        x = 1.0 / u
        return float(toll.rule(np.array([x]))[0]) / ((x + 1) * (x + 2) * u * u)

    # midpoint rule: sum_{j > J} g(j) ~ integral from J + 1/2
    tail, _ = integrate.quad(g, 0.0, 1.0 / (J + 0.5), limit=200)
    return (head + tail) / (harmonic(m) - 1)


# ---------------------------------------------------------------------------
# variance and higher moments
# ---------------------------------------------------------------------------

def _resolve_center(m, toll, base_values, exact, center):
    if center is not None:
        return _as_fraction(center) if exact else float(center)
    mu = mean_slope(m, toll, base_values, exact=exact)
    if mu is None:
        return Fraction(0) if exact else 0.0
    return mu


def _centered_base(base, c, exact):
    return [base[j] - c * (j + 1) for j in range(len(base))] if exact else \
        np.array([base[j] - c * (j + 1) for j in range(len(base))])


def variance_input(m, toll: TollSequence, base_values=None, mean_table=None, N: int = 100,
                   exact: bool = False, center=None):
    """Input r_n of the variance recurrence.

    r_n = E[t_n + sum_i mu~_{J_i} - mu~_n]^2 with mu~_n = mu_n - c(n+1); any
    center c gives the same r_n, c only affects rounding.  ``mean_table``
    (raw means mu_0..mu_N) is computed when omitted.
    """
    _check_m(m, toll)
    c = _resolve_center(m, toll, base_values, exact, center)
    t, base = _toll_and_base(toll, base_values, N, exact)
    if mean_table is None:
        mean_table = exact_mean(m, toll, base_values, N, exact)
    if len(mean_table) < N + 1:
        raise ValidationError("mean_table shorter than N+1")
    be = _Backend(m, N, exact)
    mt = [mean_table[n] - c * (n + 1) for n in range(N + 1)]
    if not exact:
        mt = np.asarray(mt, dtype=np.float64)
    return _variance_input(be, t, mt)


def _variance_input(be: _Backend, t, mt):
    m, N = be.m, be.N
    sq = [x * x for x in mt] if be.exact else mt * mt
    E1 = be.expect([mt])
    E2 = be.expect([sq])
    E11 = be.expect([mt, mt])
    r = be.zeros()
    for n in range(m - 1, N + 1):
        d = t[n] - mt[n]
        r[n] = d * d + 2 * d * m * E1[n] + m * E2[n] + m * (m - 1) * E11[n]
    return r


def exact_variance(m, toll: TollSequence, base_values=None, N: int = 100, exact: bool = False,
                   center=None):
    """Var f over trees of size 0..N; the variances obey the basic recurrence with input r_n."""
    r = variance_input(m, toll, base_values, None, N, exact, center)
    return solve_basic_recurrence(r, m, exact=exact)


@lru_cache(maxsize=None)
def _input_terms(m: int, k: int):
    """Terms of the restricted multinomial sum for order k.

    Each term is (e, parts, weight): e is the exponent of t_n, parts the sorted
    positive orders assigned to distinct subtrees (each < k), and weight the
    multinomial coefficient times the number of ways to place the parts.
    """
    terms = []
    for e in range(k + 1):
        rest = k - e
        for parts in _partitions(rest, max_part=k - 1, max_len=m):
            s = len(parts)
            multinomial = math.factorial(k) // (
                math.factorial(e) * math.prod(math.factorial(q) for q in parts))
            mult = math.prod(math.factorial(c) for c in Counter(parts).values())
            placements = math.factorial(m) // (math.factorial(m - s) * mult)
            terms.append((e, parts, multinomial * placements))
    return tuple(terms)


def _partitions(total: int, max_part: int, max_len: int):
    """Nonincreasing tuples of positive ints <= max_part, length <= max_len."""
    if total == 0:
        yield ()
        return
    if max_len == 0:
        return
    for first in range(min(total, max_part), 0, -1):
        for tail in _partitions(total - first, first, max_len - 1):
            yield (first,) + tail


def centered_moment_inputs(m, toll: TollSequence, centered_rows, k: int, N: int,
                           exact: bool = False, allow_large_k: bool = False, _backend=None,
                           _t=None):
    """r_n(k): the restricted multinomial sum driving the order-k centered moment.

    ``centered_rows[i]`` must hold mu~_n(i) = E(f - c(n+1))^i for n = 0..N and
    every i < k.  The toll enters unshifted, because sum_i (J_i + 1) = n + 1.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k > K_CAP and not allow_large_k:
        raise ValidationError(f"order {k} above cap {K_CAP}; pass allow_large_k to override")
    if len(centered_rows) < k:
        raise ValidationError(f"need centered rows for orders 0..{k - 1}")
    be = _backend or _Backend(m, N, exact)
    if _t is None:
        _t = toll.exact_values(N) if exact else toll.values(N)
    t = _t
    r = be.zeros()
    cache = {}
    for e, parts, weight in _input_terms(m, k):
        if parts not in cache:
            cache[parts] = be.expect([centered_rows[q] for q in parts]) if parts else None
        E = cache[parts]
        if not exact:
            term = weight * t[m - 1:] ** e
            r[m - 1:] += term * E[m - 1:] if E is not None else term
            continue
        for n in range(m - 1, N + 1):
            term = weight * t[n] ** e
            r[n] += term * E[n] if E is not None else term
    return r


@dataclass
class MomentTable:
    m: int
    toll: str
    N: int
    K: int
    raw: list  # raw[k][n] = E f^k
    centered: list  # centered[k][n] = E (f - c(n+1))^k
    center: object  # c; equals mu = K_1/(H_m-1) whenever that series converges
    mean_slope: object  # mu or None when divergent
    variance: object  # sigma^2_n from the variance recurrence
    mode: str = "float64"
    meta: dict = field(default_factory=dict)

    def central(self, k: int):
        """E(f - E f)^k from the centered grid."""
        c1 = self.centered[1]
        out = []
        for n in range(self.N + 1):
            s = 0
            for i in range(k + 1):
                s += math.comb(k, i) * self.centered[i][n] * (-c1[n]) ** (k - i)
            out.append(s)
        return out if self.mode == "rational" else np.array(out, dtype=np.float64)

    def skewness(self):
        var = np.asarray(self.variance, dtype=np.float64)
        c3 = np.asarray(self.central(3), dtype=np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(var > 0, c3 / np.where(var > 0, var, 1.0) ** 1.5, 0.0)

    def rows(self):
        """(n, k, raw, centered) records; rationals rendered as strings."""
        fmt = str if self.mode == "rational" else (lambda v: float(v))
        for n in range(self.N + 1):
            for k in range(self.K + 1):
                yield n, k, fmt(self.raw[k][n]), fmt(self.centered[k][n])


def centered_moments(m, toll: TollSequence, base_values=None, K: int = 2, N: int = 100,
                     exact: bool = False, center=None, allow_large_k: bool = False) -> MomentTable:
    """Raw and centered moment grids for orders 0..K and sizes 0..N."""
    _check_m(m, toll)
    if K < 1:
        raise ValidationError("K must be >= 1")
    if K > K_CAP and not allow_large_k:
        raise ValidationError(f"K={K} above cap {K_CAP}; pass allow_large_k to override")
    if N < 0:
        raise ValidationError("N must be >= 0")
    mu = mean_slope(m, toll, base_values, exact=exact)
    c = _resolve_center(m, toll, base_values, exact, center)
    t, base = _toll_and_base(toll, base_values, N, exact)
    cbase = _centered_base(base, c, exact)
    be = _Backend(m, N, exact)
    one = [Fraction(1)] * (N + 1) if exact else np.ones(N + 1)
    rows = [one]
    for k in range(1, K + 1):
        r = centered_moment_inputs(m, toll, rows, k, N, exact, allow_large_k, be, t)
        for j in range(min(m - 1, N + 1)):
            r[j] = cbase[j] ** k
        rows.append(solve_basic_recurrence(r, m, exact=exact))
    var = solve_basic_recurrence(_variance_input(be, t, rows[1]), m, exact=exact)
    shift = [c * (n + 1) for n in range(N + 1)]
    raw = [one]
    for k in range(1, K + 1):
        col = []
        for n in range(N + 1):
            col.append(sum(math.comb(k, i) * rows[i][n] * shift[n] ** (k - i) for i in range(k + 1)))
        raw.append(col if exact else np.array(col, dtype=np.float64))
    return MomentTable(m=m, toll=toll.id, N=N, K=K, raw=raw, centered=rows, center=c,
                       mean_slope=mu, variance=var, mode="rational" if exact else "float64")
