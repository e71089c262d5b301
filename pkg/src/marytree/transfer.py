"""Exact and asymptotic transfer from recurrence inputs b_n to solutions a_n.

Generating functions appear only through coefficient sequences.  The exact
solution is assembled root by root from two pieces: the Pochhammer
coefficients of (1-z)^-lam and the linear form
[z^n] (1-z)^-lam * integral_0^z (1-u)^(lam-1) Y(u) du, which obeys an O(N)
recurrence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import loggamma

from . import _kernels
from .errors import NumericalError, ValidationError
from .indicial import RootSet, alpha, ett_constants, find_roots, second_root_log_branch
from .model import TollSequence
from .moments import exact_mean, harmonic, mean_slope, solve_basic_recurrence

REALNESS_TOL = 1e-8
CONSTANT_TOL = 1e-9


# ---------------------------------------------------------------------------
# coefficient extraction
# ---------------------------------------------------------------------------

def coeff_linear_form(lam, y) -> np.ndarray:
    """w_n = [z^n] (1-z)^-lam int_0^z (1-u)^(lam-1) Y(u) du, for y_0 = 0."""
    y = np.asarray(y)
    if y.size and y[0] != 0:
        raise ValidationError("linear form needs y_0 = 0")
    return _kernels.linear_form(complex(lam), y)


def linear_form_at_two(y) -> np.ndarray:
    """Closed form for lam = 2: (n+1) sum_{k<n} y_k / ((k+1)(k+2))."""
    y = np.asarray(y, dtype=np.float64)
    k = np.arange(y.size)
    partial = np.concatenate([[0.0], np.cumsum(y / ((k + 1) * (k + 2)))[:-1]])
    return (k + 1) * partial


def pochhammer_coeff(lam, n: int) -> complex:
    """[z^n] (1-z)^-lam = rising(lam, n) / n!."""
    out = 1.0 + 0j
    for i in range(n):
        out *= (lam + i) / (i + 1)
    return out


def pochhammer_sequence(lam, N: int) -> np.ndarray:
    return _kernels.pochhammer_sequence(complex(lam), N)


def product_ratio(lam, k: int, n: int) -> complex:
    """prod_{j=k+2}^n (1 + (lam-1)/j)."""
    out = 1.0 + 0j
    for j in range(k + 2, n + 1):
        out *= 1.0 + (lam - 1.0) / j
    return out


def gamma_ratio(lam, k: int, n: int) -> complex:
    """Gamma(lam+n) Gamma(2+k) / (Gamma(1+n) Gamma(lam+k+1)), via log-gamma."""
    lam = complex(lam)
    return complex(np.exp(loggamma(lam + n) + loggamma(2.0 + k) - loggamma(1.0 + n) - loggamma(lam + k + 1)))


# ---------------------------------------------------------------------------
# exact transfer
# ---------------------------------------------------------------------------

@dataclass
class ETTResult:
    a: np.ndarray
    imag_residue: float  # max |Im a_n| / (1 + |a_n|)
    constants: np.ndarray  # c_j


def ett_solution(m: int, b, roots: Optional[RootSet] = None, check: bool = True) -> ETTResult:
    """a_n = b^_n + sum_j [c_j poch(lam_j, n) + (m!/psi'(lam_j)) w_j(n)], w_j the linear form of b^."""
    b = np.asarray(b, dtype=np.float64)
    if b.size < m - 1:
        raise ValidationError(f"need at least m-1 = {m - 1} input values")
    roots = roots or find_roots(m, "companion")
    if roots.m != m:
        raise ValidationError(f"root set is for m={roots.m}, not m={m}")
    if len(roots.roots) != m - 1:
        raise ValidationError("exact transfer needs the full root set (companion method)")
    N = b.size - 1
    bhat = b.copy()
    bhat[: m - 1] = 0.0
    c = ett_constants(m, b[: m - 1], roots)
    a = bhat.astype(np.complex128)
    for j, lam in enumerate(roots.roots):
        a += c[j] * pochhammer_sequence(lam, N)
        a += roots.inv_weights[j] * _kernels.linear_form(complex(lam), bhat)
    imag = float(np.max(np.abs(a.imag) / (1.0 + np.abs(a.real)))) if a.size else 0.0
    if check and imag > REALNESS_TOL:
        raise NumericalError(f"imaginary residue {imag:.3e} above {REALNESS_TOL}")
    return ETTResult(a.real.copy(), imag, c)


def relative_deviation(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.max(np.abs(x - y) / (1.0 + np.abs(y)))) if x.size else 0.0


def recurrence_input(a, m: int) -> np.ndarray:
    """Invert the basic recurrence: the b_n that produces a given a_n."""
    a = np.asarray(a, dtype=np.float64)
    N = a.size - 1
    b = a.copy()
    kap = np.array([math.comb(d, m - 2) for d in range(N + 1)], dtype=np.float64)
    for n in range(m - 1, N + 1):
        s = np.dot(kap[m - 2:n][::-1], a[: n - m + 2])
        b[n] = a[n] - m / math.comb(n, m - 1) * s
    return b


# ---------------------------------------------------------------------------
# asymptotic predictions
# ---------------------------------------------------------------------------

def power_denominator(m: int, v: float) -> float:
    """1 - m! Gamma(v+1) / Gamma(v+m)."""
    return 1.0 - math.exp(math.lgamma(m + 1) + math.lgamma(v + 1) - math.lgamma(v + m))


def slow_coefficient(m: int, beta: float) -> float:
    """-rising(1+beta, m-1) / (m! - rising(1+beta, m-1))."""
    r = math.exp(math.lgamma(beta + m) - math.lgamma(beta + 1))
    return -r / (math.factorial(m) - r)


@dataclass
class AsymptoticPrediction:
    regime: str  # linear | nlogn | power | power_slow | periodic
    m: int
    leading: Optional[float] = None
    secondary: Optional[float] = None
    constants: dict = field(default_factory=dict)
    premise: str = ""
    valid: bool = True
    note: str = ""

    def scale(self, n):
        """The normalizer: n, n H_n, n^v L(n), or n sum L(k)/k."""
        n = np.asarray(n, dtype=np.float64)
        c = self.constants
        if self.regime == "linear":
            return n
        if self.regime == "nlogn":
            return n * _harmonic_array(n)
        if self.regime in ("power", "power_slow"):
            return n ** c["v"] * _slow(n, c.get("p", 0.0))
        if self.regime == "linear_slow":
            return n * _log_sum(n, c.get("p", 0.0))
        raise ValidationError(f"no scale for regime {self.regime}")

    def predict(self, n):
        if not self.valid:
            raise ValidationError(f"no prediction: {self.note}")
        n = np.asarray(n, dtype=np.float64)
        if self.regime == "nlogn":
            return self.leading * self.scale(n) + self.secondary * n
        if self.regime == "power_slow":
            c = self.constants
            return c["K1"] / c["Hm1"] * n + self.secondary * self.scale(n)
        return self.leading * self.scale(n)


def _harmonic_array(n):
    n = np.asarray(n, dtype=np.int64)
    if n.size == 0:
        return np.zeros(0)
    hmax = int(n.max())
    H = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, hmax + 1))])
    return H[n]


def _slow(n, p):
    if p == 0:
        return np.ones_like(np.asarray(n, dtype=np.float64))
    ln = np.log(np.maximum(n, 1.0))
    return np.where(ln > 0, np.where(ln > 0, ln, 1.0) ** p, 0.0)


def _log_sum(n, p):
    """sum_{k <= n} L(k)/k with L = ln^p."""
    n = np.asarray(n, dtype=np.int64)
    hmax = int(n.max()) if n.size else 0
    k = np.arange(1, hmax + 1, dtype=np.float64)
    terms = _slow(k, p) / k
    cs = np.concatenate([[0.0], np.cumsum(terms)])
    return cs[n]


def att_predict(m: int, regime: str, K1=None, K2=None, h_sum=None, K4=None, v=None) -> AsymptoticPrediction:
    """Leading behaviour for the three input classes: linear (a), n log n (b), power v > 1 (c)."""
    if m < 2:
        raise ValidationError("m must be >= 2")
    Hm1 = harmonic(m) - 1.0
    H2m1 = harmonic(m, 2) - 1.0
    if regime == "linear":
        if K1 is None:
            raise ValidationError("linear regime needs K1")
        return AsymptoticPrediction("linear", m, K1 / Hm1, None, {"K1": K1, "Hm1": Hm1},
                                    "b_n = o(n) and sum b_n/((n+1)(n+2)) converges")
    if regime == "nlogn":
        if K2 is None or h_sum is None:
            raise ValidationError("n log n regime needs K2 and h_sum")
        K3 = h_sum + K2 * (Hm1 / 2.0 - 1.0 + H2m1 / (2.0 * Hm1))
        return AsymptoticPrediction("nlogn", m, K2 / Hm1, K3 / Hm1,
                                    {"K2": K2, "K3": K3, "h_sum": h_sum, "Hm1": Hm1},
                                    "b_n = K2 (n+1) + h_n with h satisfying the linear premise")
    if regime == "power":
        if K4 is None or v is None:
            raise ValidationError("power regime needs K4 and v")
        if v <= 1:
            raise ValidationError("power regime needs v > 1")
        den = power_denominator(m, v)
        return AsymptoticPrediction("power", m, K4 / den, None, {"K4": K4, "v": v, "denominator": den},
                                    "b_n = K4 n^v + o(n^v), v > 1")
    raise ValidationError(f"unknown regime {regime!r}")


def more_transfers_predict(m: int, case: str, beta=None, p: float = 0.0, K1=None, K4=None,
                           v=None) -> AsymptoticPrediction:
    """Refinements: (a) o(sqrt n) remainder, (b) n^beta L(n) secondary term,
    (c) n L(n) inputs, (d) n^v L(n) inputs; L = ln^p."""
    Hm1 = harmonic(m) - 1.0
    if case == "a":
        if m > 26:
            return AsymptoticPrediction("periodic", m, valid=False, premise="m <= 26",
                                        note=f"m={m} > 26: periodic regime, no o(sqrt n) refinement")
        if K1 is None:
            raise ValidationError("case (a) needs K1")
        return AsymptoticPrediction("linear", m, K1 / Hm1, None, {"K1": K1, "Hm1": Hm1},
                                    "m <= 26, b_n = o(sqrt n)", note="remainder o(sqrt n)")
    if case == "b":
        if beta is None or not 0.5 < beta < 1:
            raise ValidationError("case (b) needs 1/2 < beta < 1")
        a2 = alpha(m) if m >= 3 else -math.inf
        if not a2 < 1 + beta:
            return AsymptoticPrediction("periodic", m, valid=False, premise="alpha_m < 1 + beta",
                                        constants={"alpha": a2, "beta": beta},
                                        note=f"alpha_{m} = {a2:.6f} >= 1 + beta: periodic regime")
        coef = slow_coefficient(m, beta)
        return AsymptoticPrediction("power_slow", m, None, coef,
                                    {"K1": 0.0 if K1 is None else K1, "Hm1": Hm1, "beta": beta, "v": beta,
                                     "p": p, "alpha": a2},
                                    "alpha_m < 1 + beta, b_n ~ n^beta L(n), 1/2 < beta < 1")
    if case == "c":
        if p < -1:
            if K1 is None:
                raise ValidationError("convergent case (c) needs K1")
            return AsymptoticPrediction("linear", m, K1 / Hm1, None, {"K1": K1, "Hm1": Hm1, "p": p},
                                        "b_n ~ n L(n), sum L(k)/k < inf")
        return AsymptoticPrediction("linear_slow", m, 1.0 / Hm1, None, {"Hm1": Hm1, "p": p},
                                    "b_n ~ n L(n), sum L(k)/k = inf")
    if case == "d":
        if v is None or v <= 1:
            raise ValidationError("case (d) needs v > 1")
        K4 = 1.0 if K4 is None else K4
        den = power_denominator(m, v)
        return AsymptoticPrediction("power", m, K4 / den, None, {"K4": K4, "v": v, "p": p, "denominator": den},
                                    "b_n = K4 n^v L(n) + o(n^v L(n)), v > 1")
    raise ValidationError(f"unknown case {case!r}")


@dataclass
class TransferReport:
    rows: list  # (n, a_n, predicted, normalized residual)
    trend: float  # fraction of grid steps where |residual| shrinks
    final_residual: float


def verify_transfer(m: int, b, prediction: AsymptoticPrediction, N_grid, a=None) -> TransferReport:
    """Compare the exact solution against a prediction on a grid of n."""
    grid = sorted(int(n) for n in N_grid)
    if a is None:
        a = solve_basic_recurrence(np.asarray(b, dtype=np.float64)[: grid[-1] + 1], m)
    rows = []
    for n in grid:
        pred = float(prediction.predict(n))
        scale = float(prediction.scale(n))
        res = (a[n] - pred) / scale if scale else 0.0
        rows.append((n, float(a[n]), pred, float(res)))
    res = [abs(r[3]) for r in rows]
    steps = [res[i + 1] <= res[i] for i in range(len(res) - 1)]
    trend = float(np.mean(steps)) if steps else 1.0
    return TransferReport(rows, trend, res[-1] if res else 0.0)


@dataclass
class ConverseReport:
    slope: float  # K from a_n / n at the largest n
    target: float  # K (H_m - 1)
    partial_sums: list  # (n, sum_{j<n} b_j/((j+1)(j+2)))


def converse_check(m: int, a, grid=None) -> ConverseReport:
    """Recover b from a linear a_n and follow sum b_j/((j+1)(j+2)) toward K (H_m - 1)."""
    a = np.asarray(a, dtype=np.float64)
    N = a.size - 1
    b = recurrence_input(a, m)
    j = np.arange(N + 1)
    cs = np.concatenate([[0.0], np.cumsum(b / ((j + 1) * (j + 2)))])
    grid = grid or [max(1, N // 8), max(1, N // 4), max(1, N // 2), N]
    K = a[N] / N
    return ConverseReport(float(K), float(K * (harmonic(m) - 1)), [(int(n), float(cs[n])) for n in grid])


# ---------------------------------------------------------------------------
# periodicity
# ---------------------------------------------------------------------------

@dataclass
class OscillationReport:
    m: int
    toll: str
    N: int
    alpha: Optional[float]
    omega: Optional[float]  # Im lam_2
    empirical_omega: Optional[float]
    offset: float  # fitted constant level of mu~_n on the last window
    windows: list  # (lo, hi, amplitude relative to sqrt(hi))
    ratio: Optional[float]  # amplitude(last window) / amplitude(previous window)
    spread: float  # max - min of mu~_n over all n
    classification: str  # non-decaying | decaying | constant
    threshold: float


def _fit_window(n, y, al, om):
    cols = [np.ones_like(n)]
    if om is not None and om != 0:
        cols += [n ** (al - 1) * np.cos(om * np.log(n)), n ** (al - 1) * np.sin(om * np.log(n))]
    elif al is not None:
        cols.append(n ** (al - 1))
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef, X


def periodicity_probe(m: int, toll: TollSequence, base_values=None, N: int = 20000,
                      num_windows: int = 4, threshold: float = 1.0) -> OscillationReport:
    """Oscillation evidence for mu~_n = mu_n - mu (n+1).

    Each dyadic window [L, 2L] ending at N gets a least-squares fit
    const + n^(alpha-1) (b cos(omega ln n) + c sin(omega ln n)), with
    lam_2 = alpha + i omega.  The fitted oscillation amplitude at the window end
    is reported relative to sqrt(n); a ratio above ``threshold`` between the
    last two windows marks the oscillation as non-decaying on that scale.
    The empirical frequency comes from a scan over omega on the upper half of
    the range, independent of lam_2.
    """
    if N < 64:
        raise ValidationError("N too small for a dyadic-window probe")
    mu = mean_slope(m, toll, base_values, exact=True)
    if mu is None:
        mu = mean_slope(m, toll, base_values)
    if mu is None:
        raise ValidationError("toll has no linear mean slope; the probe needs a convergent K_1")
    mu = float(mu)
    # mu~ obeys the same recurrence with base values shifted by -mu (j+1); solving
    # that directly avoids subtracting two large numbers
    base = toll.base_values() if base_values is None else np.asarray(base_values, dtype=np.float64)
    shifted = [base[j] - mu * (j + 1) for j in range(m - 1)]
    mt = exact_mean(m, toll, shifted, N)
    n_all = np.arange(N + 1, dtype=np.float64)
    spread = float(mt.max() - mt.min())
    if m >= 3:
        lam2 = find_roots(m).second if m <= 40 else second_root_log_branch(m)
        al, om = lam2.real, (lam2.imag if lam2.imag != 0 else None)
    else:
        al, om = None, None
    windows = []
    hi = N
    for _ in range(num_windows):
        lo = hi // 2
        if lo < max(m, 8):
            break
        n = n_all[lo:hi + 1]
        coef, _ = _fit_window(n, mt[lo:hi + 1], al, om)
        if om is not None:
            amp = math.hypot(coef[1], coef[2]) * hi ** (al - 1)
        elif al is not None:
            amp = abs(coef[1]) * hi ** (al - 1)
        else:
            amp = 0.0
        windows.append((int(lo), int(hi), float(amp / math.sqrt(hi)), float(coef[0])))
        hi = lo
    windows.reverse()
    if spread <= CONSTANT_TOL * (1.0 + float(np.max(np.abs(mt)))):
        cls, ratio = "constant", None
    else:
        a1, a2 = windows[-2][2], windows[-1][2]
        ratio = a2 / a1 if a1 > 0 else None
        cls = "non-decaying" if ratio is not None and ratio > threshold else "decaying"
    emp = None
    if om is not None and cls != "constant":
        emp = _scan_frequency(n_all[N // 16:], mt[N // 16:], al)
    return OscillationReport(m, toll.id, N, al, om, emp, windows[-1][3],
                             [(lo, hi, amp) for lo, hi, amp, _ in windows], ratio, spread, cls, threshold)


def _scan_frequency(n, y, al):
    ln = np.log(n)
    scaled_base = n ** (al - 1)

    def resid(om):
        X = np.column_stack([np.ones_like(n), scaled_base * np.cos(om * ln), scaled_base * np.sin(om * ln)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        return float(np.sum((X @ coef - y) ** 2))

    grid = np.linspace(0.2, 12.0, 237)
    vals = [resid(w) for w in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best = minimize_scalar(resid, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    return float(best.x)
