"""The indicial polynomial psi(lam) = lam (lam+1) ... (lam+m-2) - m! and its roots."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .moments import harmonic

RESIDUAL_TOL = 1e-10
COMPANION_MAX_M = 40


@dataclass(frozen=True)
class IndicialPolynomial:
    m: int
    coeffs: tuple  # coeffs[j] multiplies lam**j (exact ints)

    @property
    def degree(self) -> int:
        return self.m - 1

    def __call__(self, lam):
        return psi(self.m, lam)

    def highest_first(self) -> list:
        return list(reversed(self.coeffs))


def rising_coeffs(d: int) -> list:
    """Coefficients (ascending) of lam (lam+1) ... (lam+d-1): signless Stirling numbers s(d, j)."""
    c = [1]
    for k in range(d):
        nxt = [0] * (len(c) + 1)
        for j, v in enumerate(c):
            nxt[j] += k * v
            nxt[j + 1] += v
        c = nxt
    return c


def build_indicial(m: int) -> IndicialPolynomial:
    if m < 2:
        raise ValidationError("m must be >= 2")
    c = rising_coeffs(m - 1)
    c[0] -= math.factorial(m)
    return IndicialPolynomial(m, tuple(c))


def _log_rising(m: int, lam):
    """sum_{k<m-1} Log(lam + k), principal branches, vectorized over lam."""
    lam = np.asarray(lam, dtype=np.complex128)
    k = np.arange(m - 1)
    with np.errstate(divide="ignore"):
        return np.log(lam[..., None] + k).sum(axis=-1)


def psi(m: int, lam):
    """psi in product form (no expanded coefficients)."""
    if isinstance(lam, (int, Fraction)):
        p = Fraction(1)
        for k in range(m - 1):
            p *= lam + k
        return p - math.factorial(m)
    lam = complex(lam)
    p = 1.0 + 0j
    for k in range(m - 1):
        p *= lam + k
    return p - math.factorial(m)


def relative_residual(m: int, lam) -> np.ndarray:
    """|psi(lam)| / m!, stable for large m."""
    lr = _log_rising(m, lam) - math.lgamma(m + 1)
    return np.abs(np.exp(lr) - 1.0)


def psi_derivative(m: int, lam, order: int = 1):
    """psi'(lam) (or psi'' with order=2), by the product rule."""
    if order not in (1, 2):
        raise ValidationError("order must be 1 or 2")
    exact = isinstance(lam, (int, Fraction))
    lam = Fraction(lam) if exact else complex(lam)
    factors = [lam + k for k in range(m - 1)]
    n = len(factors)
    if order == 1:
        total = 0
        for i in range(n):
            p = 1
            for j in range(n):
                if j != i:
                    p *= factors[j]
            total += p
        return total
    total = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            p = 1
            for k in range(n):
                if k != i and k != j:
                    p *= factors[k]
            total += p
    return total


@dataclass
class RootSet:
    m: int
    roots: np.ndarray  # complex, sorted by real part then imaginary part, descending
    derivs: np.ndarray  # psi'(lam_j)
    inv_weights: np.ndarray  # m!/psi'(lam_j) = 1 / sum_k 1/(lam_j + k)
    residuals: np.ndarray  # |psi(lam_j)| / m!
    method: str = "companion"

    @property
    def alpha(self) -> Optional[float]:
        return float(self.roots[1].real) if self.m >= 3 else None

    @property
    def second(self) -> Optional[complex]:
        return complex(self.roots[1]) if self.m >= 3 else None

    def rows(self):
        for j, lam in enumerate(self.roots, start=1):
            yield self.m, j, float(lam.real), float(lam.imag), float(self.residuals[j - 1])


def _newton_ratio(m, z):
    """psi(z)/psi'(z) in the overflow-free form (1 - m!/P) / sum 1/(z+k)."""
    d = z + np.arange(m - 1)
    if np.any(d == 0):
        return 0j
    S = np.sum(1.0 / d)
    return (1.0 - np.exp(math.lgamma(m + 1) - np.sum(np.log(d)))) / S


def _polish(m, z0, iters=500):
    """Simultaneous Newton with Aberth repulsion; lam = 2 stays fixed."""
    z = np.array(z0, dtype=np.complex128)
    fixed = np.array([2.0 + 0j])
    for _ in range(iters):
        moved = 0.0
        for i in range(len(z)):
            w = _newton_ratio(m, z[i])
            others = np.concatenate([fixed, np.delete(z, i)])
            rep = np.sum(1.0 / (z[i] - others))
            step = w / (1.0 - w * rep)
            z[i] -= step
            moved = max(moved, abs(step) / max(1.0, abs(z[i])))
        if moved < 1e-15:
            break
    return z


def _snap(roots, scale):
    out = []
    for z in roots:
        if abs(z.imag) <= 1e-9 * scale:
            z = complex(z.real, 0.0)
        out.append(z)
    out = np.array(out, dtype=np.complex128)
    # force exact conjugate pairs
    pos = [z for z in out if z.imag > 0]
    real = [z for z in out if z.imag == 0]
    neg = [z for z in out if z.imag < 0]
    if len(pos) != len(neg):
        raise NumericalError(f"roots not closed under conjugation: {out}")
    fixed = list(real)
    for z in pos:
        j = int(np.argmin([abs(w - np.conj(z)) for w in neg]))
        w = neg.pop(j)
        avg = complex((z.real + w.real) / 2, (z.imag - w.imag) / 2)
        fixed.extend([avg, avg.conjugate()])
    return np.array(fixed, dtype=np.complex128)


def _sort(roots):
    # nonincreasing real part, ties (conjugate pairs) with positive imaginary part first
    return np.array(sorted(roots, key=lambda z: (-round(z.real, 12), -z.imag)), dtype=np.complex128)


def _deflate_two(coeffs) -> list:
    """Exact synthetic division of psi (highest-first ints) by lam - 2."""
    out = []
    acc = 0
    for c in coeffs:
        acc = acc * 2 + c
        out.append(acc)
    if out[-1] != 0:
        raise NumericalError("lam = 2 is not a root")  # cannot happen
    return out[:-1]


def roots_companion(m: int) -> np.ndarray:
    """Deflate lam = 2 exactly, companion-matrix eigenvalues, Newton polish."""
    poly = build_indicial(m)
    q = _deflate_two(poly.highest_first())
    if len(q) <= 1:
        rest = np.zeros(0, dtype=np.complex128)
    else:
        rest = np.roots(np.array(q, dtype=np.float64)).astype(np.complex128)
        # eigenvalues of the ill-conditioned companion matrix can stray for m near 40;
        # reseed those on a circle covering the root region
        bad = np.abs(rest) > 4 * m
        if np.any(bad):
            ang = np.pi * (np.arange(bad.sum()) + 0.5) / bad.sum()
            rest[bad] = -m / 2 + m * np.exp(1j * ang)
        rest = _polish(m, rest)
    scale = max(1.0, float(m))
    return _sort(np.concatenate([[2.0 + 0j], _snap(rest, scale)]))


def second_root_log_branch(m: int, iters: int = 100) -> complex:
    """lam_2 as the solution of sum_k Log(lam + k) = ln m! + 2 pi i (branch q = 1).

    Works for any m >= 4; the start 2 + 2 pi i / (H_m - 1) comes from
    linearizing the log-sum at lam = 2.
    """
    if m < 4:
        raise ValidationError("log-branch solver needs m >= 4 (complex lam_2)")
    k = np.arange(m - 1, dtype=np.float64)
    target = math.lgamma(m + 1) + 2j * math.pi
    lam = 2.0 + 2j * math.pi / (harmonic(m) - 1.0)
    for _ in range(iters):
        d = lam + k
        F = np.sum(np.log(d)) - target
        step = F / np.sum(1.0 / d)
        # damp large steps so the iterate stays in the upper half plane
        while abs(step) > 0.5 * abs(lam.imag) and abs(step) > 1e-3:
            step *= 0.5
        lam = lam - step
        if abs(step) <= 1e-15 * abs(lam):
            break
    return complex(lam)


def find_roots(m: int, method: Optional[str] = None) -> RootSet:
    """All m-1 roots, with psi' values and residual checks.

    Companion matrix for m <= 40; above that only lam_1 = 2 and the pair
    lam_2, conj(lam_2) are returned (method "log-branch").
    """
    if m < 2:
        raise ValidationError("m must be >= 2")
    method = method or ("companion" if m <= COMPANION_MAX_M else "log-branch")
    if method == "companion":
        roots = roots_companion(m)
    elif method == "log-branch":
        if m <= 3:
            roots = roots_companion(m)
        else:
            z = second_root_log_branch(m)
            roots = np.array([2.0, z, np.conj(z)], dtype=np.complex128)
    else:
        raise ValidationError(f"unknown method {method!r}")
    k = np.arange(m - 1)
    S = np.array([np.sum(1.0 / (z + k)) for z in roots])
    inv_w = 1.0 / S
    derivs = math.exp(math.lgamma(m + 1)) * S if m <= 170 else np.full(len(roots), np.inf)
    res = relative_residual(m, roots)
    if np.max(res) > RESIDUAL_TOL:
        raise NumericalError(f"root residual {np.max(res):.3e} above {RESIDUAL_TOL} for m={m}")
    if method == "companion" and len(roots) != m - 1:
        raise NumericalError("wrong number of roots")
    return RootSet(m, roots, derivs, inv_w, res, method)


def alpha(m: int) -> float:
    """alpha_m = Re lam_2 (m >= 3)."""
    if m < 3:
        raise ValidationError("alpha_m needs m >= 3")
    if m <= COMPANION_MAX_M:
        return find_roots(m).alpha
    return second_root_log_branch(m).real


def alpha_asymptote(m: int) -> float:
    return 2.0 - 2.0 * math.pi ** 2 * (math.pi ** 2 / 6 - 1.0) / math.log(m) ** 3


def alpha_table(m_max: int):
    """Rows (m, alpha_m, Im lam_2, first-order asymptote) for m = 3..m_max."""
    if m_max < 3:
        raise ValidationError("m_max must be >= 3")
    rows = []
    for m in range(3, m_max + 1):
        if m <= COMPANION_MAX_M:
            z = find_roots(m).second
        else:
            z = second_root_log_branch(m)
        rows.append((m, z.real, z.imag, alpha_asymptote(m)))
    return rows


def m0(beta: float, m_cap: int = 10 ** 6) -> Optional[int]:
    """Largest m with alpha_m < 1 + beta; None when no finite bound (beta >= 1)
    or the bound exceeds ``m_cap``."""
    if beta >= 1:
        return None
    thr = 1.0 + beta
    lo = 3
    if alpha(lo) >= thr:
        return 2
    hi = 4
    while alpha(hi) < thr:
        lo = hi
        hi *= 2
        if hi > m_cap:
            return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if alpha(mid) < thr:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# identities and transfer constants
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    m: int
    partial_fractions: float  # relative residual, random points
    power_sums: float  # normalized residual over 0 <= k <= m-3
    derivative_at_two: float  # relative
    second_derivative_at_two: float  # relative
    harmonic_sum: float  # relative

    @property
    def worst(self) -> float:
        return max(self.partial_fractions, self.power_sums, self.derivative_at_two,
                   self.second_derivative_at_two, self.harmonic_sum)


def check_identities(m: int, trial_points=None, seed: int = 0) -> IdentityReport:
    rs = find_roots(m, "companion")
    lam = rs.roots
    fact = math.factorial(m)
    # work with m!/psi'(lam_j) = inv_weights to stay in range
    iw = rs.inv_weights
    if trial_points is None:
        rng = np.random.default_rng(seed)
        trial_points = rng.uniform(-4, 4, 8) + 1j * rng.uniform(-4, 4, 8)
    pf = 0.0
    for z in np.atleast_1d(trial_points):
        lhs = np.sum(iw / (z - lam))  # m! * sum 1/((z-lam_j) psi'(lam_j))
        rhs = fact / psi(m, z)
        pf = max(pf, abs(lhs - rhs) / abs(rhs))
    ps = 0.0
    for k in range(m - 2):
        terms = lam ** k * iw
        ps = max(ps, abs(np.sum(terms)) / np.sum(np.abs(terms)))
    H, H2 = harmonic(m), harmonic(m, 2)
    d1 = psi_derivative(m, 2)
    d1_rel = abs(float(d1) - fact * (H - 1)) / (fact * (H - 1))
    d2 = psi_derivative(m, 2, order=2)
    d2_pred = fact * ((H - 1) ** 2 - (H2 - 1))
    d2_rel = abs(float(d2) - d2_pred) / abs(d2_pred) if d2_pred else abs(float(d2))
    if m >= 3:
        lhs = np.sum(iw[1:] / (lam[1:] - 2.0))
        rhs = (1.0 - (H2 - 1) / (H - 1) ** 2) / 2.0
        hs = abs(lhs - rhs) / abs(rhs)
    else:
        hs = 0.0  # empty sum; the right side vanishes for m = 2
    return IdentityReport(m, float(pf), float(ps), d1_rel, d2_rel, float(hs))


def ett_constants(m: int, initial, roots: Optional[RootSet] = None) -> np.ndarray:
    """c_j = (m!/psi'(lam_j)) sum_{k <= m-2} b_k k! / rising(lam_j, k+1)."""
    roots = roots or find_roots(m)
    if roots.m != m:
        raise ValidationError("root set built for a different m")
    if len(initial) != m - 1:
        raise ValidationError(f"need {m - 1} initial values")
    out = np.zeros(len(roots.roots), dtype=np.complex128)
    for j, lam in enumerate(roots.roots):
        total = 0j
        rise = 1.0 + 0j
        for k in range(m - 1):
            rise *= lam + k  # rising(lam, k+1)
            total += float(initial[k]) * math.factorial(k) / rise
        out[j] = roots.inv_weights[j] * total
    return out


def c1_closed_form(m: int, initial, exact: bool = False):
    """c_1 = sum_j b_j / ((j+1)(j+2)) / (H_m - 1)."""
    if exact:
        s = sum((Fraction(initial[j]) / ((j + 1) * (j + 2)) for j in range(m - 1)), Fraction(0))
        return s / (harmonic(m, exact=True) - 1)
    s = math.fsum(float(initial[j]) / ((j + 1) * (j + 2)) for j in range(m - 1))
    return s / (harmonic(m) - 1)
