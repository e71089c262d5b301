"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both paths are called directly from marytree._kernels, so one process covers
both regardless of MARYTREE_PURE_NUMPY.  The first numba call (compile or
cache load) is excluded.
"""
import argparse
import math
import time

import numpy as np

from marytree import _kernels as K
from marytree.model import parse_toll
from marytree.moments import pascal_column


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    N, m = 200_000, 5
    b = np.random.default_rng(0).standard_normal(N + 1)
    w = np.array([m / math.comb(n, m - 1) if n >= m - 1 else 0.0 for n in range(N + 1)])
    kap = pascal_column(m, N)
    yield ("recurrence pascal N=2e5 m=5",
           lambda: K._recurrence_pascal(b, w, m), lambda: K.recurrence_pascal_nb(b, w, m))
    n2 = 4000
    yield ("recurrence naive N=4e3 m=5",
           lambda: K.recurrence_dot(b[:n2 + 1], w[:n2 + 1], kap[:n2 + 1], m),
           lambda: K.recurrence_naive_nb(b[:n2 + 1], w[:n2 + 1], kap[:n2 + 1], m))
    y = np.random.default_rng(1).standard_normal(N + 1)
    lam = complex(0.5685, 3.0268)
    yield ("linear form N=2e5", lambda: K.linear_form_np(lam, y), lambda: K.linear_form_nb(lam, y))
    m, n = 3, 500
    toll = parse_toll("shape", m)
    t, base = toll.values(n), toll.base_values()
    perms = np.argsort(np.random.default_rng(2).random((2000, n)), axis=1) + 1
    yield ("functional 2000 trees n=500 m=3",
           lambda: K._functional_rows_py(perms, m, t, base), lambda: K._functional_rows_nb(perms, m, t, base))
    tn = parse_toll("path-length", 2).values(8)
    yield ("exhaustive n=8 m=2",
           lambda: _fallback(K.exhaustive_power_sums, 8, 2, tn, np.zeros(1), 3),
           lambda: K._exhaustive_power_sums_nb(8, 2, tn, np.zeros(1), 3))


def _fallback(fn, *args):
    saved, K.USE_NUMBA = K.USE_NUMBA, False
    try:
        return fn(*args)
    finally:
        K.USE_NUMBA = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return
    print(f"{'kernel':<36}{'numpy s':>12}{'numba s':>12}{'speedup':>10}")
    for name, py, nb in cases():
        tp, tn = best_of(py, args.repeat), best_of(nb, args.repeat)
        print(f"{name:<36}{tp:>12.4f}{tn:>12.4f}{tp / tn:>10.1f}")


if __name__ == "__main__":
    main()
