"""Acceptance suite.  Each check returns measured values and a pass flag; the
report contains no timings beyond within-budget booleans, so it is reproducible."""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import indicial, limitlaw, moments, transfer
from .io import plain
from .model import exhaustive_exact_moments, exhaustive_moments, monte_carlo_moments, parse_toll


@dataclass
class CriterionResult:
    number: int
    key: str
    title: str
    passed: bool
    measured: dict
    note: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:>2} {self.key}: {self.title} | {vals}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


@dataclass
class SuiteConfig:
    seed: int = 0
    num_streams: int = 4
    threads: int = 1


class _Clock:
    def __init__(self, budget):
        self.budget = budget

    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ok = time.perf_counter() - self.t < self.budget


def check_brute_force(cfg: SuiteConfig) -> CriterionResult:
    worst_exact_mismatch = 0
    worst_float = 0.0
    with _Clock(60.0) as clock:
        for m in (2, 3):
            for name in ("constant", "path-length", "shape"):
                toll = parse_toll(name, m)
                rational = toll.is_rational
                for n in range(0, 10):
                    if rational:
                        table = moments.centered_moments(m, toll, K=3, N=n, exact=True)
                        ref = exhaustive_exact_moments(m, n, toll, k_max=3)
                        worst_exact_mismatch += sum(table.raw[k][n] != ref[k] for k in range(1, 4))
                    table = moments.centered_moments(m, toll, K=3, N=n)
                    ref = exhaustive_moments(m, n, toll, k_max=3)
                    for k in range(1, 4):
                        y = ref.raw[k - 1]
                        worst_float = max(worst_float, abs(table.raw[k][n] - y) / max(abs(y), 1e-300) if y else abs(table.raw[k][n]))
    ok = worst_exact_mismatch == 0 and worst_float <= 1e-10 and clock.ok
    return CriterionResult(1, "brute", "recurrence moments vs exhaustive enumeration", ok,
                           {"rational_mismatches": worst_exact_mismatch, "float_rel_dev": worst_float,
                            "within_60s": clock.ok})


def check_degenerate(cfg: SuiteConfig) -> CriterionResult:
    nonzero = 0
    for m in range(2, 7):
        toll = parse_toll("degenerate:t=1", m)
        var = moments.exact_variance(m, toll, N=500, exact=True)
        nonzero += sum(v != 0 for v in var)
    return CriterionResult(2, "degenerate", "degenerate toll has zero variance (rational)", nonzero == 0,
                           {"nonzero_entries": nonzero})


def check_ett(cfg: SuiteConfig) -> CriterionResult:
    rng = np.random.default_rng(12345)
    dev = imag = 0.0
    for m in range(2, 7):
        roots = indicial.find_roots(m, "companion")
        for _ in range(20):
            b = rng.standard_normal(301)
            res = transfer.ett_solution(m, b, roots, check=False)
            dev = max(dev, transfer.relative_deviation(res.a, moments.solve_basic_recurrence(b, m)))
            imag = max(imag, res.imag_residue)
    return CriterionResult(3, "ett", "exact transfer equals recurrence", dev <= 1e-8 and imag <= 1e-8,
                           {"max_rel_dev": dev, "imag_residue": imag})


def check_identities(cfg: SuiteConfig) -> CriterionResult:
    d1 = d2 = 0.0
    for m in range(2, 31):
        rep = indicial.check_identities(m)
        d1 = max(d1, rep.derivative_at_two)
        d2 = max(d2, rep.second_derivative_at_two)
    ident = 0.0
    for m in range(2, 16):
        rep = indicial.check_identities(m)
        ident = max(ident, rep.partial_fractions, rep.power_sums, rep.harmonic_sum)
    ok = d1 <= 1e-8 and d2 <= 1e-8 and ident < 1e-8
    return CriterionResult(4, "identities", "indicial derivative and root identities", ok,
                           {"psi1_rel": d1, "psi2_rel": d2, "root_identities": ident})


def check_roots(cfg: SuiteConfig) -> CriterionResult:
    with _Clock(10.0) as clock:
        table = indicial.alpha_table(40)
    alphas = [row[1] for row in table if row[0] >= 3]
    mono = all(b > a for a, b in zip(alphas, alphas[1:]))
    a26 = next(r[1] for r in table if r[0] == 26)
    a27 = next(r[1] for r in table if r[0] == 27)
    ok = mono and a26 < 1.5 < a27 and clock.ok
    return CriterionResult(5, "roots", "alpha increasing, boundary between m=26 and 27", ok,
                           {"increasing": mono, "alpha26": a26, "alpha27": a27, "within_10s": clock.ok})


def check_att_power(cfg: SuiteConfig) -> CriterionResult:
    n = 10_000
    target = 35.0 / 11.0
    with _Clock(60.0) as clock:
        b = np.arange(n + 1, dtype=np.float64) ** 1.5
        a = moments.solve_basic_recurrence(b, 3)
    rel = abs(a[n] / n ** 1.5 - target) / target
    # supplementary: remove the n and sqrt(n) corrections by a three-point fit
    pts = [n // 4, n // 2, n]
    X = np.array([[k ** 1.5, k, k ** 0.5] for k in pts])
    lead = float(np.linalg.solve(X, a[pts])[0])
    ok = rel <= 0.02 and clock.ok
    return CriterionResult(6, "att", "power input v=3/2, m=3, constant 35/11", ok,
                           {"rel_dev": rel, "ratio": a[n] / n ** 1.5, "target": target,
                            "fitted_leading": lead, "fitted_rel_dev": abs(lead - target) / target,
                            "within_60s": clock.ok},
                           note="ratio carries a -c/sqrt(n) correction; fitted_leading removes it")


def check_clt_small(cfg: SuiteConfig) -> CriterionResult:
    toll = parse_toll("shape", 3)
    table = moments.centered_moments(3, toll, K=3, N=2000)
    skew = float(table.skewness()[2000])
    v = np.asarray(table.variance, dtype=np.float64)
    change = abs(v[2000] / 2000 - v[1000] / 1000) / (v[2000] / 2000)
    mc = monte_carlo_moments(3, 2000, toll, k_max=1, num_samples=100_000, seed=cfg.seed,
                             num_streams=cfg.num_streams, threads=cfg.threads)
    z = (mc.raw[0] - float(table.raw[1][2000])) / mc.raw_se[0]
    ok = abs(skew) <= 0.1 and change < 0.02 and abs(z) <= 4
    return CriterionResult(7, "clt", "shape toll m=3: skewness, variance slope, Monte Carlo mean", ok,
                           {"skewness": skew, "var_slope_change": change, "mc_z": z})


def check_borderline(cfg: SuiteConfig) -> CriterionResult:
    target = limitlaw.sigma2_borderline(2)
    toll = parse_toll("power:beta=0.5", 2)
    n1, n2 = 10_000, 20_000
    v = np.asarray(moments.exact_variance(2, toll, N=n2), dtype=np.float64)
    H = moments.harmonic
    r1 = v[n1] / (n1 * H(n1))
    r2 = v[n2] / (n2 * H(n2))
    e1, e2 = abs(r1 / target - 1), abs(r2 / target - 1)
    # supplementary: the n-linear correction cancels in a difference quotient
    slope = (v[n2] / n2 - v[n1] / n1) / (H(n2) - H(n1))
    ok = e2 <= 0.10 and e2 < e1
    return CriterionResult(8, "borderline", "m=2, sqrt(n) toll: var/(n H_n) vs 9pi/2-14", ok,
                           {"ratio_1e4": r1, "ratio_2e4": r2, "target": target, "rel_dev_2e4": e2,
                            "moving_toward": e2 < e1, "difference_quotient": slope,
                            "difference_quotient_rel_dev": abs(slope / target - 1)},
                           note="var = sigma^2 n H_n + C n; the C n term decays only like 1/H_n in the ratio")


def check_large(cfg: SuiteConfig) -> CriterionResult:
    n = 10_000
    mean = moments.exact_mean(2, parse_toll("power:beta=2", 2), N=n)
    mean_rel = abs(mean[n] / n ** 2 - 3) / 3
    st = limitlaw.sample_Y_stats(2, 2.0, 20, 100_000, seed=cfg.seed, num_streams=cfg.num_streams)
    z1 = (st.mean - 3) / st.mean_se
    z2 = (st.second - 28 / 3) / st.second_se
    g2 = limitlaw.g_moments(2, 2.0, 2).g[2]
    g2_dev = abs(g2 - limitlaw.g2_closed(2, 2.0)) / g2
    ok = mean_rel <= 0.01 and abs(z1) <= 3 and abs(z2) <= 3 and g2_dev <= 1e-10
    return CriterionResult(9, "large", "m=2, beta=2: mean constant, sampler, g_2 closed form", ok,
                           {"mean_rel_dev": mean_rel, "sample_mean_z": z1, "sample_second_z": z2,
                            "g2_rel_dev": g2_dev})


def check_moderate(cfg: SuiteConfig) -> CriterionResult:
    a, b = limitlaw.g1_closed(2, 0.75)
    p = limitlaw.g_moments(2, 0.75, 2)
    dev = max(abs(a + 7), abs(b + 7), abs(p.g[1] + 7)) / 7
    ok = dev <= 1e-12 and p.variance > 0
    return CriterionResult(10, "moderate", "m=2, beta=3/4: g_1 = -7, positive variance", ok,
                           {"g1_rel_dev": dev, "variance": p.variance})


def check_periodic(cfg: SuiteConfig) -> CriterionResult:
    const30 = transfer.periodicity_probe(30, parse_toll("constant", 30), N=20_000)
    const10 = transfer.periodicity_probe(10, parse_toll("constant", 10), N=20_000)
    amps10 = [w[2] for w in const10.windows]
    decays = all(b < a for a, b in zip(amps10, amps10[1:]))
    cancel = parse_toll("cancel:K=1", 30)
    mu = moments.mean_slope(30, cancel, exact=True)
    shifted = [Fraction(b) - mu * (j + 1) for j, b in enumerate(cancel.initial)]
    exact = moments.exact_mean(30, cancel, shifted, N=300, exact=True)
    exact_const = len(set(exact)) == 1
    flt = transfer.periodicity_probe(30, cancel, N=20_000)
    ok = (const30.ratio is not None and const30.ratio > 0.5 and decays and const10.ratio < 1
          and exact_const and flt.classification == "constant")
    return CriterionResult(11, "periodic", "oscillation persists for m=30, decays for m=10, cancellation toll", ok,
                           {"ratio_m30": const30.ratio, "ratio_m10": const10.ratio, "m10_amplitudes": amps10,
                            "cancel_exact_constant": exact_const, "cancel_value": str(exact[0]),
                            "cancel_float_spread": flt.spread})


def _determinism_payload(seed, streams, threads):
    toll = parse_toll("shape", 3)
    mc = monte_carlo_moments(3, 300, toll, k_max=2, num_samples=4000, seed=seed,
                             num_streams=streams, threads=threads)
    st = limitlaw.sample_Y_stats(2, 2.0, 12, 4000, seed=seed, num_streams=streams)
    return json.dumps(plain({"mc": mc, "Y": st}), sort_keys=True).encode()


def check_determinism(cfg: SuiteConfig) -> CriterionResult:
    first = _determinism_payload(cfg.seed, cfg.num_streams, 1)
    second = _determinism_payload(cfg.seed, cfg.num_streams, max(2, cfg.threads))
    return CriterionResult(12, "determinism", "same seed and streams give identical bytes", first == second,
                           {"sha256": hashlib.sha256(first).hexdigest()[:16], "identical": first == second})


CHECKS = [check_brute_force, check_degenerate, check_ett, check_identities, check_roots, check_att_power,
          check_clt_small, check_borderline, check_large, check_moderate, check_periodic, check_determinism]
KEYS = ["brute", "degenerate", "ett", "identities", "roots", "att", "clt", "borderline", "large",
        "moderate", "periodic", "determinism"]


def select(only=None):
    if not only:
        return list(CHECKS)
    chosen = []
    for item in only:
        item = str(item).strip()
        if item.isdigit() and 1 <= int(item) <= len(CHECKS):
            chosen.append(CHECKS[int(item) - 1])
        elif item in KEYS:
            chosen.append(CHECKS[KEYS.index(item)])
        else:
            raise ValueError(f"unknown criterion {item!r}; choose from 1-{len(CHECKS)} or {', '.join(KEYS)}")
    return sorted(set(chosen), key=CHECKS.index)


def run_suite(only=None, cfg: SuiteConfig = None, on_result=None) -> list:
    cfg = cfg or SuiteConfig()
    out = []
    for check in select(only):
        res = check(cfg)
        out.append(res)
        if on_result:
            on_result(res)
    return out
