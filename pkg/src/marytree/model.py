"""Trees, toll sequences, functional evaluation and Monte Carlo sampling."""
from __future__ import annotations

import bisect
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import NotRational, ValidationError

KINDS = ("constant", "path_length", "shape", "power", "custom", "degenerate", "cancel")


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))


# ---------------------------------------------------------------------------
# toll sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TollSequence:
    """Per-subtree cost t_n, with explicit values t_0..t_{m-2} in ``initial``.

    ``initial`` doubles as the default base values f(T) for trees with fewer
    than m-1 keys.
    """
    m: int
    kind: str
    initial: tuple
    params: dict = field(default_factory=dict, compare=False)
    spec: str = ""
    table: Optional[tuple] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.m < 2:
            raise ValidationError("m must be >= 2")
        if len(self.initial) != self.m - 1:
            raise ValidationError(f"need {self.m - 1} initial values, got {len(self.initial)}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown toll kind {self.kind!r}")

    @property
    def id(self) -> str:
        return self.spec or self.kind

    @property
    def is_rational(self) -> bool:
        if self.kind in ("constant", "path_length", "degenerate", "cancel", "custom"):
            return True
        if self.kind == "power":
            beta = self.params["beta"]
            return self.params["p"] == 0 and float(beta).is_integer() and beta >= 0
        return False

    def rule(self, n):
        """t_n for n >= m-1 (vectorized over integer arrays)."""
        n = np.asarray(n, dtype=np.float64)
        m = self.m
        k = self.kind
        if k == "constant":
            return np.full_like(n, float(self.params["value"]))
        if k == "path_length":
            return n - (m - 1)
        if k == "shape":
            from scipy.special import gammaln
            return gammaln(n + 1) - gammaln(m) - gammaln(n - m + 2)
        if k == "power":
            beta, p = self.params["beta"], self.params["p"]
            out = n ** beta
            if p != 0:
                ln = np.log(np.maximum(n, 1.0))
                safe = np.where(ln > 0, ln, 1.0)
                out = np.where(ln > 0, out * safe ** p, 0.0)
            return out
        if k == "degenerate":
            return float(self.params["t"]) * np.minimum(m - 1, n)
        if k == "cancel":
            return np.ones_like(n)
        if k == "custom":
            tab = self.table
            idx = n.astype(np.int64)
            if idx.size and idx.max() >= len(tab):
                raise ValidationError(f"custom toll table covers n < {len(tab)}, asked for {int(idx.max())}")
            return np.array([float(tab[i]) for i in idx.ravel()]).reshape(idx.shape)
        raise AssertionError(k)

    def values(self, N: int) -> np.ndarray:
        """t_0..t_N as float64 (initial values below m-1)."""
        out = np.zeros(N + 1)
        lo = min(self.m - 1, N + 1)
        out[:lo] = [float(x) for x in self.initial[:lo]]
        if N >= self.m - 1:
            out[self.m - 1:] = self.rule(np.arange(self.m - 1, N + 1))
        return out

    def exact_values(self, N: int) -> list:
        """t_0..t_N as Fractions; raises NotRational for transcendental tolls."""
        if not self.is_rational:
            raise NotRational(f"toll {self.id} has irrational values; use float mode")
        m = self.m
        out = [_as_fraction(x) for x in self.initial[: N + 1]]
        k = self.kind
        for n in range(m - 1, N + 1):
            if k == "constant":
                out.append(_as_fraction(self.params["value"]))
            elif k == "path_length":
                out.append(Fraction(n - (m - 1)))
            elif k == "degenerate":
                out.append(_as_fraction(self.params["t"]) * min(m - 1, n))
            elif k == "cancel":
                out.append(Fraction(1))
            elif k == "power":
                out.append(Fraction(n) ** int(self.params["beta"]))
            elif k == "custom":
                if n >= len(self.table):
                    raise ValidationError(f"custom toll table covers n < {len(self.table)}")
                out.append(_as_fraction(self.table[n]))
        return out

    def base_values(self) -> np.ndarray:
        return np.array([float(x) for x in self.initial])


def _canonical_kind(name: str) -> str:
    name = name.strip().lower().replace("-", "_")
    if name in ("pathlength", "path"):
        name = "path_length"
    return name


def parse_toll(spec: str, m: int) -> TollSequence:
    """Parse ``name[:key=val,...]``.

    Recognized names: constant (value), path-length, shape, power (beta, p),
    custom (file), degenerate (t), cancel (K).  Any kind accepts
    ``initial=v0;v1;...`` with m-1 entries.
    """
    if m < 2:
        raise ValidationError("m must be >= 2")
    name, _, rest = spec.partition(":")
    kind = _canonical_kind(name)
    if kind not in KINDS:
        raise ValidationError(f"unknown toll {name!r}; expected one of {', '.join(KINDS)}")
    opts = {}
    if rest.strip():
        for item in rest.split(","):
            if "=" not in item:
                raise ValidationError(f"bad toll option {item!r} (want key=val)")
            key, val = item.split("=", 1)
            opts[key.strip()] = val.strip()

    def take(key, default):
        return opts.pop(key, default)

    params: dict = {}
    table = None
    try:
        if kind == "constant":
            params["value"] = _as_fraction(take("value", "1"))
            default_init = [params["value"] * min(j, 1) for j in range(m - 1)]
        elif kind == "degenerate":
            params["t"] = _as_fraction(take("t", "1"))
            default_init = [params["t"] * j for j in range(m - 1)]
        elif kind == "cancel":
            params["K"] = _as_fraction(take("K", "1"))
            default_init = [params["K"] * (j + 1) - Fraction(1, m - 1) for j in range(m - 1)]
        elif kind == "power":
            params["beta"] = float(take("beta", "1"))
            params["p"] = float(take("p", "0"))
            default_init = [Fraction(0)] * (m - 1)
        elif kind == "custom":
            path = take("file", None)
            if path is None:
                raise ValidationError("custom toll needs file=path")
            table = _read_toll_table(path)
            default_init = [_as_fraction(table[j]) if j < len(table) else Fraction(0) for j in range(m - 1)]
        else:
            default_init = [Fraction(0)] * (m - 1)
        init = take("initial", None)
        if init is not None:
            initial = tuple(_as_fraction(v) for v in init.split(";") if v.strip())
        else:
            initial = tuple(default_init)
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad toll spec {spec!r}: {exc}") from None
    if opts:
        raise ValidationError(f"unknown toll option(s) {sorted(opts)} for {kind}")
    return TollSequence(m=m, kind=kind, initial=initial, params=params, spec=spec, table=table)


def _read_toll_table(path) -> tuple:
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                n = int(row[0])
            except ValueError:
                continue  # header
            rows[n] = row[1].strip()
    if not rows:
        raise ValidationError(f"no data rows in {path}")
    N = max(rows)
    missing = [n for n in range(N + 1) if n not in rows]
    if missing:
        raise ValidationError(f"custom toll table missing n={missing[:5]}")
    return tuple(rows[n] for n in range(N + 1))


def make_toll(m: int, kind: str = "constant", initial=None, **params) -> TollSequence:
    """Programmatic constructor; mirrors the string grammar."""
    parts = [f"{k}={v}" for k, v in params.items()]
    if initial is not None:
        parts.append("initial=" + ";".join(str(_as_fraction(v)) for v in initial))
    spec = kind + (":" + ",".join(parts) if parts else "")
    return parse_toll(spec, m)


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------

@dataclass
class Node:
    keys: list
    size: int
    children: list = field(default_factory=list)  # m slots (None = empty) only for full nodes

    @property
    def is_full(self) -> bool:
        return bool(self.children)


@dataclass
class SearchTree:
    m: int
    root: Optional[Node]

    @property
    def size(self) -> int:
        return 0 if self.root is None else self.root.size

    def nodes(self):
        stack = [self.root] if self.root is not None else []
        while stack:
            node = stack.pop()
            yield node
            stack.extend(c for c in reversed(node.children) if c is not None)

    def keys(self) -> list:
        return sorted(k for node in self.nodes() for k in node.keys)

    def canonical(self):
        """Hashable nested-tuple form; equal trees give equal values."""
        def rec(node):
            if node is None:
                return None
            return (tuple(node.keys), tuple(rec(c) for c in node.children))
        # depth is bounded by n/(m-1); recursion is fine for the sizes where this is used
        return rec(self.root)

    def to_dict(self):
        def rec(node):
            if node is None:
                return None
            d = {"keys": list(node.keys), "size": node.size}
            if node.children:
                d["children"] = [rec(c) for c in node.children]
            return d
        return {"m": self.m, "n": self.size, "root": rec(self.root)}


def build_tree(m: int, keys: Sequence[int]) -> SearchTree:
    """Bulk construction: the first m-1 keys form the root, the rest split by rank."""
    if m < 2:
        raise ValidationError("m must be >= 2")
    keys = [int(k) for k in keys]
    if len(set(keys)) != len(keys):
        seen, dup = set(), []
        for k in keys:
            if k in seen:
                dup.append(k)
            seen.add(k)
        raise ValidationError(f"duplicate keys: {sorted(set(dup))}")
    if not keys:
        return SearchTree(m, None)
    root_holder = [None]
    stack = [(keys, root_holder, 0)]
    while stack:
        seq, parent, slot = stack.pop()
        node = Node(sorted(seq[: m - 1]), len(seq))
        parent[slot] = node
        if len(seq) >= m - 1:
            node.children = [None] * m
            buckets = [[] for _ in range(m)]
            for k in seq[m - 1:]:
                buckets[bisect.bisect_left(node.keys, k)].append(k)
            for j, b in enumerate(buckets):
                if b:
                    stack.append((b, node.children, j))
    return SearchTree(m, root_holder[0])


def subtree_sizes(tree: SearchTree) -> tuple:
    if tree.root is None or tree.size < tree.m - 1:
        raise ValidationError(f"tree has {tree.size} keys; need at least m-1 = {tree.m - 1}")
    return tuple(0 if c is None else c.size for c in tree.root.children)


def _base_array(toll: TollSequence, base_values) -> np.ndarray:
    if base_values is None:
        return toll.base_values()
    base = np.array([float(x) for x in base_values])
    if base.shape[0] != toll.m - 1:
        raise ValidationError(f"need {toll.m - 1} base values")
    return base


def eval_functional(tree: SearchTree, toll: TollSequence, base_values=None) -> float:
    """f(T) = sum of f over the m subtrees plus t_|T|; base values below m-1 keys."""
    if tree.m != toll.m:
        raise ValidationError("tree and toll disagree on m")
    base = _base_array(toll, base_values)
    t = toll.values(max(tree.size, 0))
    m = tree.m
    total = 0.0
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node is None:
            total += base[0]
        elif node.size < m - 1:
            total += base[node.size]
        else:
            total += t[node.size]
            stack.extend(node.children)
    return total


def shape_prob(tree: SearchTree) -> Fraction:
    q = Fraction(1)
    for node in tree.nodes():
        if node.is_full:
            q /= math.comb(node.size, tree.m - 1)
    return q


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream)."""
    if seed < 0 or stream < 0:
        raise ValidationError("seed and stream must be nonnegative")
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + int(stream)))


def sample_functional(m, n, toll, base_values, rng) -> float:
    base = _base_array(toll, base_values)
    if n == 0:
        return float(base[0])
    perm = rng.permutation(n)[None, :]
    return float(_kernels.functional_rows(perm, m, toll.values(n), base)[0])


def sample_functionals(m, n, toll, base_values, count, rng, chunk=8192) -> np.ndarray:
    """``count`` independent values of f for random permutations of size n."""
    base = _base_array(toll, base_values)
    t = toll.values(n)
    out = np.empty(count)
    done = 0
    while done < count:
        rows = min(chunk, count - done)
        perms = rng.permuted(np.tile(np.arange(n, dtype=np.int64), (rows, 1)), axis=1)
        out[done:done + rows] = _kernels.functional_rows(perms, m, t, base)
        done += rows
    return out


@dataclass
class SampleStats:
    n: int
    m: int
    toll: str
    num_samples: int
    seed: Optional[int]
    num_streams: int
    mode: str  # "monte_carlo" | "exhaustive"
    raw: list  # k = 1..k_max
    raw_se: list
    centered: list
    centered_se: list

    @property
    def mean(self):
        return self.raw[0]

    @property
    def variance(self):
        return self.centered[1] if len(self.centered) > 1 else None

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _split(total, parts):
    q, r = divmod(total, parts)
    return [q + (1 if i < r else 0) for i in range(parts)]


def monte_carlo_moments(m, n, toll, base_values=None, k_max=2, num_samples=10_000, seed=0,
                        num_streams=1, threads=1, exhaustive=False) -> SampleStats:
    """Empirical raw and centered moments of f over random trees of size n.

    Samples are split evenly across ``num_streams`` keyed generators and the
    per-stream results are concatenated in stream order, so the output only
    depends on (seed, num_streams).  ``exhaustive=True`` averages over all n!
    permutations instead (n <= 10).
    """
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    base = _base_array(toll, base_values)
    if exhaustive:
        return exhaustive_moments(m, n, toll, base, k_max)
    if num_samples < 1:
        raise ValidationError("num_samples must be >= 1")
    if num_streams < 1:
        raise ValidationError("num_streams must be >= 1")
    counts = _split(num_samples, num_streams)

    def run(s):
        if counts[s] == 0:
            return np.empty(0)
        return sample_functionals(m, n, toll, base, counts[s], stream_rng(seed, s))

    if threads > 1 and num_streams > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(num_streams)))
    else:
        parts = [run(s) for s in range(num_streams)]
    x = np.concatenate(parts)
    raw, raw_se, cen, cen_se = [], [], [], []
    mean = x.mean()
    d = x - mean
    for k in range(1, k_max + 1):
        pk = x ** k
        ck = d ** k
        raw.append(float(pk.mean()))
        cen.append(float(ck.mean()) if k > 1 else 0.0)
        if x.size > 1:
            raw_se.append(float(pk.std(ddof=1) / math.sqrt(x.size)))
            cen_se.append(float(ck.std(ddof=1) / math.sqrt(x.size)))
        else:
            raw_se.append(None)
            cen_se.append(None)
    return SampleStats(n, m, toll.id, int(x.size), seed, num_streams, "monte_carlo",
                       raw, raw_se, cen, cen_se)


EXHAUSTIVE_MAX_N = 10


def exhaustive_power_sums(m, n, toll, base_values=None, k_max=3) -> np.ndarray:
    """sum over all n! permutations of f^k for k = 0..k_max (float)."""
    if n > EXHAUSTIVE_MAX_N:
        raise ValidationError(f"exhaustive mode limited to n <= {EXHAUSTIVE_MAX_N}")
    base = _base_array(toll, base_values)
    if n == 0:
        return base[0] ** np.arange(k_max + 1)
    return _kernels.exhaustive_power_sums(n, m, toll.values(n), base, k_max)


def exhaustive_exact_moments(m, n, toll, base_values=None, k_max=3) -> list:
    """Raw moments E f^k (k = 0..k_max) as Fractions, by full enumeration.

    Requires integer toll and base values so the float power sums are exact
    integers; checked against the 2^53 bound.
    """
    vals = toll.exact_values(n)
    base = [_as_fraction(v) for v in (toll.initial if base_values is None else base_values)]
    if any(v.denominator != 1 for v in vals + base):
        raise NotRational("exact enumeration needs integer-valued tolls")
    bound = (sum(abs(v) for v in vals) + (n + 1) * max([abs(v) for v in base] + [0]))
    if math.factorial(n) * float(bound) ** k_max >= 2 ** 53:
        raise NotRational("power sums would exceed exact float range")
    sums = exhaustive_power_sums(m, n, toll, [float(v) for v in base], k_max)
    total = math.factorial(n)
    return [Fraction(int(round(s)), total) for s in sums]


def exhaustive_moments(m, n, toll, base_values=None, k_max=3) -> SampleStats:
    sums = exhaustive_power_sums(m, n, toll, base_values, 2 * k_max)
    total = float(math.factorial(n))
    raw_all = sums / total
    mean = raw_all[1]
    raw = [float(raw_all[k]) for k in range(1, k_max + 1)]
    cen = []
    for k in range(1, k_max + 1):
        cen.append(float(sum(math.comb(k, i) * raw_all[i] * (-mean) ** (k - i) for i in range(k + 1))) if k > 1 else 0.0)
    none = [None] * k_max
    return SampleStats(n, m, toll.id, math.factorial(n), None, 1, "exhaustive",
                       raw, none, cen, list(none))
