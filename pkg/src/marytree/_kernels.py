"""Hot numeric loops, each with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``MARYTREE_PURE_NUMPY`` is unset
(or ``0``).  Both paths are always importable so the benchmark and the tests
can compare them in one process.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

PURE_NUMPY = os.environ.get("MARYTREE_PURE_NUMPY", "0") not in ("", "0")
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not PURE_NUMPY


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# basic recurrence  a_n = b_n + w_n * sum_j C(n-1-j, m-2) a_j
# ---------------------------------------------------------------------------

def _recurrence_pascal(b, w, m):
    # S[r] tracks sum_j C(n-1-j, r) a_j; Pascal's rule advances all r in O(m).
    N = b.shape[0] - 1
    a = np.empty(N + 1)
    S = np.zeros(m - 1)
    for n in range(N + 1):
        if n > 0:
            for r in range(m - 2, 0, -1):
                S[r] += S[r - 1]
            S[0] += a[n - 1]
        if n <= m - 2:
            a[n] = b[n]
        else:
            a[n] = b[n] + w[n] * S[m - 2]
    return a


def _recurrence_naive(b, w, kappa, m):
    N = b.shape[0] - 1
    a = np.empty(N + 1)
    for n in range(N + 1):
        if n <= m - 2:
            a[n] = b[n]
            continue
        s = 0.0
        for j in range(n - m + 2):
            s += kappa[n - 1 - j] * a[j]
        a[n] = b[n] + w[n] * s
    return a


def recurrence_dot(b, w, kappa, m):
    """O(N^2) numpy path: one dot product per index."""
    N = b.shape[0] - 1
    a = np.empty(N + 1)
    for n in range(N + 1):
        if n <= m - 2:
            a[n] = b[n]
        else:
            a[n] = b[n] + w[n] * np.dot(kappa[m - 2:n][::-1], a[: n - m + 2])
    return a


recurrence_pascal_nb = _njit(_recurrence_pascal)
recurrence_naive_nb = _njit(_recurrence_naive)


def basic_recurrence(b, w, kappa, m, method="pascal"):
    if method == "naive":
        if USE_NUMBA:
            return recurrence_naive_nb(b, w, kappa, m)
        return recurrence_dot(b, w, kappa, m)
    if USE_NUMBA:
        return recurrence_pascal_nb(b, w, m)
    return recurrence_dot(b, w, kappa, m)


# ---------------------------------------------------------------------------
# coefficient extraction for (1-z)^-lam * int_0^z (1-u)^(lam-1) Y(u) du
# ---------------------------------------------------------------------------

def _linear_form(lam, y):
    N = y.shape[0] - 1
    w = np.zeros(N + 1, dtype=np.complex128)
    P = 0.0 + 0.0j
    Q = 0.0 + 0.0j
    for n in range(1, N + 1):
        P += w[n - 1]
        Q += y[n - 1]
        w[n] = (lam * P + Q) / n
    return w


def linear_form_np(lam, y):
    """Closed product form; falls back to the loop when a factor vanishes."""
    N = y.shape[0] - 1
    j = np.arange(2, N + 1)
    factors = 1.0 + (lam - 1.0) / j
    if np.any(factors == 0):
        return _linear_form(complex(lam), y.astype(np.complex128))
    # R[n] = prod_{j=2}^n (1 + (lam-1)/j), R[0] = R[1] = 1
    R = np.ones(N + 1, dtype=np.complex128)
    if N >= 2:
        R[2:] = np.cumprod(factors)
    k = np.arange(N + 1)
    terms = np.zeros(N + 1, dtype=np.complex128)
    terms[:N] = y[:N] / ((k[:N] + 1) * R[1:])
    w = np.zeros(N + 1, dtype=np.complex128)
    w[1:] = R[1:] * np.cumsum(terms)[:N]
    return w


linear_form_nb = _njit(_linear_form)


def linear_form(lam, y):
    y = np.asarray(y, dtype=np.complex128)
    if USE_NUMBA:
        return linear_form_nb(complex(lam), y)
    return linear_form_np(complex(lam), y)


def pochhammer_sequence(lam, N):
    """[z^n] (1-z)^-lam for n = 0..N."""
    n = np.arange(1, N + 1)
    out = np.ones(N + 1, dtype=np.complex128)
    out[1:] = np.cumprod((lam + n - 1) / n)
    return out


# ---------------------------------------------------------------------------
# functional evaluation straight from a key sequence
# ---------------------------------------------------------------------------

def _eval_sequence(seq, m, toll, base, buf, tmp, bucket, lo_st, hi_st, roots, counts, cur):
    n = seq.shape[0]
    for i in range(n):
        buf[i] = seq[i]
    total = 0.0
    sp = 1
    lo_st[0] = 0
    hi_st[0] = n
    while sp > 0:
        sp -= 1
        lo = lo_st[sp]
        hi = hi_st[sp]
        size = hi - lo
        if size < m - 1:
            total += base[size]
            continue
        total += toll[size]
        # insertion sort of the root keys
        for i in range(m - 1):
            x = buf[lo + i]
            p = i
            while p > 0 and roots[p - 1] > x:
                roots[p] = roots[p - 1]
                p -= 1
            roots[p] = x
        for b in range(m):
            counts[b] = 0
        for i in range(lo + m - 1, hi):
            x = buf[i]
            b = 0
            while b < m - 1 and roots[b] < x:
                b += 1
            bucket[i] = b
            counts[b] += 1
        pos = lo
        for b in range(m):
            cur[b] = pos
            lo_st[sp] = pos
            hi_st[sp] = pos + counts[b]
            sp += 1
            pos += counts[b]
        for i in range(lo + m - 1, hi):
            b = bucket[i]
            tmp[cur[b]] = buf[i]
            cur[b] += 1
        for i in range(lo, pos):
            buf[i] = tmp[i]
    return total


def _functional_rows(perms, m, toll, base):
    rows, n = perms.shape
    out = np.empty(rows)
    size = max(n, 1)
    buf = np.empty(size, dtype=np.int64)
    tmp = np.empty(size, dtype=np.int64)
    bucket = np.empty(size, dtype=np.int64)
    lo_st = np.empty(m * size + 2, dtype=np.int64)
    hi_st = np.empty(m * size + 2, dtype=np.int64)
    roots = np.empty(m, dtype=np.int64)
    counts = np.empty(m, dtype=np.int64)
    cur = np.empty(m, dtype=np.int64)
    for r in range(rows):
        out[r] = _eval_sequence(perms[r], m, toll, base, buf, tmp, bucket,
                                lo_st, hi_st, roots, counts, cur)
    return out


def _exhaustive_power_sums(n, m, toll, base, kmax):
    perm = np.arange(n, dtype=np.int64)
    sums = np.zeros(kmax + 1)
    size = max(n, 1)
    buf = np.empty(size, dtype=np.int64)
    tmp = np.empty(size, dtype=np.int64)
    bucket = np.empty(size, dtype=np.int64)
    lo_st = np.empty(m * size + 2, dtype=np.int64)
    hi_st = np.empty(m * size + 2, dtype=np.int64)
    roots = np.empty(m, dtype=np.int64)
    counts = np.empty(m, dtype=np.int64)
    cur = np.empty(m, dtype=np.int64)
    while True:
        f = _eval_sequence(perm, m, toll, base, buf, tmp, bucket,
                           lo_st, hi_st, roots, counts, cur)
        p = 1.0
        for k in range(kmax + 1):
            sums[k] += p
            p *= f
        # next permutation in lexicographic order
        i = n - 2
        while i >= 0 and perm[i] >= perm[i + 1]:
            i -= 1
        if i < 0:
            break
        j = n - 1
        while perm[j] <= perm[i]:
            j -= 1
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t
        lo = i + 1
        hi = n - 1
        while lo < hi:
            t = perm[lo]
            perm[lo] = perm[hi]
            perm[hi] = t
            lo += 1
            hi -= 1
    return sums


# the outer loops resolve _eval_sequence as a global at compile time
_eval_sequence = _njit(_eval_sequence)
_functional_rows_nb = _njit(_functional_rows)
_exhaustive_power_sums_nb = _njit(_exhaustive_power_sums)


def _functional_rows_py(perms, m, toll, base):
    out = np.empty(perms.shape[0])
    for r, row in enumerate(perms):
        total = 0.0
        stack = [np.asarray(row)]
        while stack:
            seg = stack.pop()
            if seg.size < m - 1:
                total += base[seg.size]
                continue
            total += toll[seg.size]
            roots = np.sort(seg[: m - 1])
            rest = seg[m - 1:]
            idx = np.searchsorted(roots, rest)
            stack.extend(rest[idx == b] for b in range(m))
        out[r] = total
    return out


def functional_rows(perms, m, toll, base):
    """Functional value for each row of ``perms`` (one key sequence per row)."""
    perms = np.ascontiguousarray(perms, dtype=np.int64)
    toll = np.ascontiguousarray(toll, dtype=np.float64)
    base = np.ascontiguousarray(base, dtype=np.float64)
    if USE_NUMBA:
        return _functional_rows_nb(perms, m, toll, base)
    return _functional_rows_py(perms, m, toll, base)


def exhaustive_power_sums(n, m, toll, base, kmax):
    """sum over all n! permutations of f^k, k = 0..kmax."""
    toll = np.ascontiguousarray(toll, dtype=np.float64)
    base = np.ascontiguousarray(base, dtype=np.float64)
    if USE_NUMBA:
        return _exhaustive_power_sums_nb(n, m, toll, base, kmax)
    import itertools
    sums = np.zeros(kmax + 1)
    chunk = []
    for perm in itertools.permutations(range(n)):
        chunk.append(perm)
        if len(chunk) == 50_000:
            f = _functional_rows_py(np.array(chunk, dtype=np.int64).reshape(len(chunk), n), m, toll, base)
            sums += np.power.outer(f, np.arange(kmax + 1)).sum(axis=0)
            chunk = []
    if chunk:
        f = _functional_rows_py(np.array(chunk, dtype=np.int64).reshape(len(chunk), n), m, toll, base)
        sums += np.power.outer(f, np.arange(kmax + 1)).sum(axis=0)
    return sums
