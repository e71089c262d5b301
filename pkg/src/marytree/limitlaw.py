"""Limit laws: the fixed point Y = sum_j S_j^beta Y_j + 1, its moments, sampling,
and the variance constants for small tolls."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError
from .indicial import m0
from .model import TollSequence, _split, stream_rng
from .moments import _input_terms, centered_moments, harmonic, solve_basic_recurrence, variance_input

G_CAP = 16


def dirichlet_moment(m: int, exponents) -> float:
    """E prod_j S_j^{r_j} for uniform spacings S on the (m-1)-simplex."""
    r = [float(x) for x in exponents]
    if len(r) != m:
        raise ValidationError(f"need {m} exponents")
    if any(x <= -1 for x in r):
        raise ValidationError("exponents must exceed -1")
    return math.exp(math.lgamma(m) + sum(math.lgamma(x + 1) for x in r) - math.lgamma(sum(r) + m))


def spacings(m: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """(size, m) array of spacings of m-1 sorted uniforms."""
    u = np.sort(rng.random((size, m - 1)), axis=1)
    pad = np.concatenate([np.zeros((size, 1)), u, np.ones((size, 1))], axis=1)
    return np.diff(pad, axis=1)


def _ratio(m: int, x: float) -> float:
    """m! Gamma(x+1) / Gamma(x+m)."""
    return math.exp(math.lgamma(m + 1) + math.lgamma(x + 1) - math.lgamma(x + m))


def contraction_factor(m: int, beta: float):
    """(rho^2, valid) with rho^2 = m! Gamma(2 beta + 1) / Gamma(2 beta + m); valid iff rho^2 < 1."""
    rho2 = _ratio(m, 2 * beta)
    return rho2, rho2 < 1 and not math.isclose(rho2, 1.0, rel_tol=0, abs_tol=1e-15)


@dataclass
class LimitLawParams:
    m: int
    beta: float
    g: list  # g_0..g_K
    rho2: float

    @property
    def mean(self) -> float:
        return self.g[1]

    @property
    def variance(self) -> float:
        return self.g[2] - self.g[1] ** 2


def _check_beta(m, beta, K):
    if m < 2:
        raise ValidationError("m must be >= 2")
    if not beta > 0.5:
        raise ValidationError("beta must exceed 1/2")
    if beta == 1:
        raise ValidationError("beta = 1 is excluded")
    for k in range(1, K + 1):
        if math.isclose(k * beta, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValidationError(f"k*beta = 1 at k={k}: the order-{k} denominator vanishes")


def g_moments(m: int, beta: float, K: int = 4, allow_large_k: bool = False) -> LimitLawParams:
    """Moments g_k = E Y^k from the restricted multinomial recursion.

    Expanding (sum S_j^beta Y_j + 1)^k and moving the terms with some k_i = k
    to the left leaves g_k (1 - m! Gamma(k beta+1)/Gamma(k beta+m)) equal to a
    sum over lower orders; the sum is grouped by the multiset of nonzero orders.
    """
    if K < 1:
        raise ValidationError("K must be >= 1")
    if K > G_CAP and not allow_large_k:
        raise ValidationError(f"K={K} above cap {G_CAP}")
    _check_beta(m, beta, K)
    g = [1.0]
    for k in range(1, K + 1):
        total = 0.0
        for e, parts, weight in _input_terms(m, k):
            if not parts:
                total += weight
                continue
            expo = [beta * q for q in parts] + [0.0] * (m - len(parts))
            total += weight * math.prod(g[q] for q in parts) * dirichlet_moment(m, expo)
        g.append(total / (1.0 - _ratio(m, k * beta)))
    rho2, _ = contraction_factor(m, beta)
    return LimitLawParams(m, beta, g, rho2)


def g_moments_direct(m: int, beta: float, K: int) -> list:
    """Same recursion by enumerating every (m+1)-composition of k; small m, K only."""
    _check_beta(m, beta, K)
    g = [1.0]
    for k in range(1, K + 1):
        total = 0.0
        for ks in itertools.product(range(k + 1), repeat=m):
            rest = k - sum(ks)
            if rest < 0 or max(ks) >= k:
                continue
            coef = math.factorial(k) // (math.factorial(rest) * math.prod(math.factorial(x) for x in ks))
            total += coef * math.prod(g[x] for x in ks) * dirichlet_moment(m, [beta * x for x in ks])
        g.append(total / (1.0 - _ratio(m, k * beta)))
    return g


def g1_closed(m: int, beta: float) -> tuple:
    """Both closed forms of g_1: (1 - m!Gamma(beta+1)/Gamma(beta+m))^-1 and
    -rising(1+beta, m-1) / (m! - rising(1+beta, m-1))."""
    first = 1.0 / (1.0 - _ratio(m, beta))
    r = math.exp(math.lgamma(beta + m) - math.lgamma(beta + 1))
    second = -r / (math.factorial(m) - r)
    return first, second


def g2_closed(m: int, beta: float) -> float:
    g1 = g1_closed(m, beta)[0]
    lg = math.lgamma
    inner = (1.0 / math.factorial(m - 1)
             + 2 * m * g1 * math.exp(lg(beta + 1) - lg(beta + m))
             + m * (m - 1) * g1 ** 2 * math.exp(2 * lg(beta + 1) - lg(2 * beta + m)))
    return math.factorial(m - 1) / (1.0 - _ratio(m, 2 * beta)) * inner


def fixed_point_residual(params: LimitLawParams) -> float:
    """max_k |unrestricted sum / g_k - 1|: the full expansion of E(sum S^beta Y + 1)^k."""
    m, beta, g = params.m, params.beta, params.g
    worst = 0.0
    for k in range(1, len(g)):
        total = 0.0
        for e, parts, weight in _input_terms(m, k):
            expo = [beta * q for q in parts] + [0.0] * (m - len(parts))
            total += weight * math.prod(g[q] for q in parts) * (dirichlet_moment(m, expo) if parts else 1.0)
        # the excluded terms: one subtree carries all k
        total += m * g[k] * dirichlet_moment(m, [beta * k] + [0.0] * (m - 1))
        worst = max(worst, abs(total / g[k] - 1.0))
    return worst


@dataclass
class CarlemanReport:
    gamma_root: list  # |g_k / k!|^(1/k), k = 1..K
    M: float  # smallest M with |gamma_k| <= M^k on the computed range
    bounded: bool
    note: str = ""


def carleman_growth_check(params: LimitLawParams) -> CarlemanReport:
    """Evidence that gamma_k = g_k/k! grows at most geometrically.

    ``bounded`` asks that the k-th roots settle: the increments over the last
    third of the range do not grow.
    """
    g = params.g
    K = len(g) - 1
    roots = [abs(g[k] / math.factorial(k)) ** (1.0 / k) for k in range(1, K + 1)]
    M = max(roots)
    if K < 4:
        return CarlemanReport(roots, M, True, "K < 4: trivially bounded on this range")
    inc = np.diff(roots)
    tail = inc[-max(2, K // 3):]
    settled = bool(np.all(tail[1:] <= np.maximum(tail[:-1], 0) + 1e-12)) or bool(np.all(tail <= 0))
    return CarlemanReport(roots, M, settled)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def default_tolerance(beta: float) -> float:
    # about 256 surviving nodes per sample
    return 256.0 ** (-beta)


def sample_Y(m: int, beta: float, depth: int, rng: np.random.Generator, size: Optional[int] = None,
             tol: Optional[float] = None, g1: Optional[float] = None, chunk: int = 2000,
             return_pruned: bool = False):
    """Draws from the depth-truncated expansion of Y = sum S_j^beta Y_j + 1.

    A node at depth 0 is replaced by g_1.  Nodes whose weight (product of
    S^beta along the path) falls below ``tol`` are replaced by weight * g_1 as
    well, which keeps the mean exact; ``return_pruned`` also returns the sum of
    squared replaced weights per draw, so the lost variance is
    Var(Y) times its mean.  Levels are expanded breadth-first for ``chunk``
    draws at a time; the chunk size is part of the stream layout, so changing
    it changes the draws.
    """
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    if g1 is None:
        g1 = g1_closed(m, beta)[0]
    if tol is None:
        tol = default_tolerance(beta)
    count = 1 if size is None else int(size)
    out = np.empty(count)
    lost = np.zeros(count)
    start = 0
    while start < count:
        rows = min(chunk, count - start)
        total = np.zeros(rows)
        miss = np.zeros(rows)
        idx = np.arange(rows)
        w = np.ones(rows)
        for _ in range(depth):
            if idx.size == 0:
                break
            total += np.bincount(idx, weights=w, minlength=rows)
            S = spacings(m, idx.size, rng)
            w = (w[:, None] * S ** beta).ravel()
            idx = np.repeat(idx, m)
            small = w < tol
            if np.any(small):
                total += g1 * np.bincount(idx[small], weights=w[small], minlength=rows)
                miss += np.bincount(idx[small], weights=w[small] ** 2, minlength=rows)
                w, idx = w[~small], idx[~small]
        if idx.size:
            total += g1 * np.bincount(idx, weights=w, minlength=rows)
            miss += np.bincount(idx, weights=w ** 2, minlength=rows)
        out[start:start + rows] = total
        lost[start:start + rows] = miss
        start += rows
    if size is None:
        return (float(out[0]), float(lost[0])) if return_pruned else float(out[0])
    return (out, lost) if return_pruned else out


def truncated_second_moment(params: LimitLawParams, depth: int) -> float:
    """E Y_d^2 without pruning: g_2 - rho^(2d) (g_2 - g_1^2)."""
    g1, g2 = params.g[1], params.g[2]
    return g2 - params.rho2 ** depth * (g2 - g1 ** 2)


@dataclass
class LawSampleStats:
    m: int
    beta: float
    depth: int
    num_samples: int
    seed: int
    num_streams: int
    tol: float
    mean: float
    mean_se: float
    second: float
    second_se: float
    variance: float
    lost_variance: float  # Var(Y) * mean squared pruned weight

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def sample_Y_stats(m: int, beta: float, depth: int, num_samples: int, seed: int = 0, num_streams: int = 1,
                   tol: Optional[float] = None) -> LawSampleStats:
    if num_samples < 2:
        raise ValidationError("need at least 2 samples for standard errors")
    tol = default_tolerance(beta) if tol is None else tol
    params = g_moments(m, beta, 2)
    parts, lost = [], []
    for s, c in enumerate(_split(num_samples, num_streams)):
        if c:
            x, l = sample_Y(m, beta, depth, stream_rng(seed, s), size=c, tol=tol,
                            g1=params.g[1], return_pruned=True)
            parts.append(x)
            lost.append(l)
    x = np.concatenate(parts)
    lost = np.concatenate(lost)
    sq = x * x
    rt = math.sqrt(x.size)
    return LawSampleStats(m, beta, depth, int(x.size), seed, num_streams, tol,
                          float(x.mean()), float(x.std(ddof=1) / rt),
                          float(sq.mean()), float(sq.std(ddof=1) / rt), float(x.var(ddof=1)),
                          float(params.variance * lost.mean()))


# ---------------------------------------------------------------------------
# variance constants
# ---------------------------------------------------------------------------

BORDERLINE_MAX_M = 26


@dataclass
class Sigma2Result:
    value: float  # partial sum plus tail estimate
    partial: float
    tail_estimate: float
    N_tail: int


def sigma2_small(m: int, toll: TollSequence, base_values=None, N_tail: int = 4000) -> Sigma2Result:
    """sigma^2 = sum_j r_j / ((j+1)(j+2)) / (H_m - 1), r the variance input.

    The tail beyond N_tail is estimated as rbar / (N_tail + 2) with rbar the
    mean of r_j over the last quarter of the range (r_j levels off for small tolls).
    """
    if m > BORDERLINE_MAX_M:
        raise ValidationError(f"m={m} > {BORDERLINE_MAX_M}: the variance is not linear in n")
    if toll.kind == "path_length" or (toll.kind == "power" and toll.params.get("beta", 0) >= 0.5):
        raise ValidationError(f"toll {toll.id} is not o(sqrt n)")
    r = np.asarray(variance_input(m, toll, base_values, None, N_tail), dtype=np.float64)
    j = np.arange(N_tail + 1)
    Hm1 = harmonic(m) - 1.0
    partial = math.fsum(r / ((j + 1) * (j + 2))) / Hm1
    rbar = float(np.mean(r[3 * N_tail // 4:])) if N_tail >= 4 else 0.0
    tail = rbar / (N_tail + 2) / Hm1
    return Sigma2Result(partial + tail, partial, tail, N_tail)


def sigma2_borderline(m: int) -> float:
    """Variance scale for t_n ~ sqrt(n) L(n) with divergent sum L(k)^2/k (Var ~ sigma^2 n sum L^2(k)/k)."""
    if m < 2:
        raise ValidationError("m must be >= 2")
    if m > BORDERLINE_MAX_M:
        raise ValidationError(f"m={m} > {BORDERLINE_MAX_M}: periodic regime, no variance constant")
    r = math.exp(math.lgamma(1.5 + m - 1) - math.lgamma(1.5))  # rising(3/2, m-1)
    f = math.factorial(m)
    num = r * r * (math.pi / 4 * (m - 1) + 1) - f * f
    den = (harmonic(m) - 1) * (f - r) ** 2
    return num / den


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------

@dataclass
class LawDescriptor:
    case: str
    law: str  # normal | fixed-point | periodic
    m: int
    beta: Optional[float] = None
    g1: Optional[float] = None
    g2: Optional[float] = None
    scale: Optional[float] = None  # g_2^(-1/2): W = scale * Y
    standardized_scale: Optional[float] = None  # (g_2 - g_1^2)^(-1/2): W = (Y - g_1) * this
    m0: Optional[int] = None
    note: str = ""

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summary_normalization(m: int, toll_class: str, beta: Optional[float] = None) -> LawDescriptor:
    """Limit of the normalized functional, by toll class.

    toll_class: small-a (t_n = o(sqrt n)), small-b (t_n ~ sqrt(n) L(n)),
    moderate (n^beta L(n), 1/2 < beta < 1) or large (beta > 1).

    For the fixed-point cases two normalizations are reported: g_2^(-1/2) Y,
    the limit of (X_n - mu (n+1)) / sqrt(E (X_n - mu(n+1))^2), and the
    standardized (Y - g_1) / sqrt(g_2 - g_1^2), the limit of
    (X_n - E X_n) / sqrt(Var X_n).
    """
    if toll_class in ("small-a", "small-b"):
        if m <= 26:
            return LawDescriptor(toll_class, "normal", m, note="standard normal")
        return LawDescriptor(toll_class, "periodic", m, note="m > 26: periodic regime, no limit law")
    if toll_class not in ("moderate", "large"):
        raise ValidationError(f"unknown toll class {toll_class!r}")
    if beta is None:
        raise ValidationError(f"{toll_class} class needs beta")
    if toll_class == "moderate":
        if not 0.5 < beta < 1:
            raise ValidationError("moderate class needs 1/2 < beta < 1")
        bound = m0(beta)
        if bound is not None and m > bound:
            return LawDescriptor(toll_class, "periodic", m, beta, m0=bound,
                                 note=f"m > m0({beta}) = {bound}: periodic regime, no limit law")
    elif not beta > 1:
        raise ValidationError("large class needs beta > 1")
    else:
        bound = None
    p = g_moments(m, beta, 2)
    g1, g2 = p.g[1], p.g[2]
    return LawDescriptor(toll_class, "fixed-point", m, beta, g1, g2, g2 ** -0.5, (g2 - g1 * g1) ** -0.5,
                         bound, note="W = scale * Y with Y the fixed point; standardized form also given")


# ---------------------------------------------------------------------------
# bridge to exact moments
# ---------------------------------------------------------------------------

@dataclass
class ConsistencyReport:
    m: int
    beta: float
    rows: list  # (n, k, ratio, g_k)
    form: str  # raw | centered
    note: str = ""


def limit_consistency(m: int, beta: float, N: int = 10000, K: int = 2, grid=None) -> ConsistencyReport:
    """Exact moments of the power toll n^beta against g_k n^(k beta).

    Large beta compares raw moments E X_n^k; moderate beta compares
    E (X_n - mu(n+1))^k.
    """
    from .model import parse_toll
    params = g_moments(m, beta, K)
    toll = parse_toll(f"power:beta={beta}", m)
    table = centered_moments(m, toll, K=K, N=N)
    form = "raw" if beta > 1 else "centered"
    grid = grid or [N // 4, N // 2, N]
    rows = []
    for n in grid:
        for k in range(K + 1):
            val = table.raw[k][n] if form == "raw" else table.centered[k][n]
            rows.append((n, k, float(val) / float(n) ** (k * beta), params.g[k]))
    note = ("raw normalization X_n / n^beta for beta > 1 is assumed by analogy with the centered case"
            if form == "raw" else "")
    return ConsistencyReport(m, beta, rows, form, note)
