"""Command-line front end: ``marytree <subcommand>`` or ``python -m marytree``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import indicial, limitlaw, moments, transfer, verify
from .errors import NumericalError, ValidationError
from .io import dumps_csv, dumps_json, emit
from .model import (build_tree, eval_functional, exhaustive_exact_moments, monte_carlo_moments, parse_toll,
                    shape_prob, stream_rng)

OUTPUT_DIR_ENV = "MARYTREE_OUTPUT_DIR"

EXIT_OK, EXIT_VALIDATION, EXIT_ACCEPTANCE, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass
class RunConfig:
    subcommand: str
    m: Optional[int] = None
    toll: Optional[str] = None
    N: Optional[int] = None
    K: Optional[int] = None
    seed: Optional[int] = None
    num_samples: Optional[int] = None
    mode: str = "float64"
    format: str = "csv"
    output: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.m is not None and self.m < 2:
            raise ValidationError(f"m must be >= 2, got {self.m}")
        if self.N is not None and self.N < 0:
            raise ValidationError("N must be >= 0")
        if self.K is not None and self.K < 1:
            raise ValidationError("K must be >= 1")
        if self.num_samples is not None and self.num_samples < 1:
            raise ValidationError("number of samples must be >= 1")
        if self.format not in ("csv", "json"):
            raise ValidationError(f"unknown format {self.format!r}")

    def echo(self) -> dict:
        # the output path is not part of what determines the bytes
        d = asdict(self)
        d.pop("output")
        return d


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common(p, seeded=False, exact=False, streams=1):
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
    p.add_argument("--output", "-o", help=f"output file; '-' for stdout (default: ${OUTPUT_DIR_ENV}/<cmd>.<fmt> "
                                          "if set, else stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo streams")
    if seeded:
        p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
        p.add_argument("--streams", type=int, default=streams, help=f"independent random streams (default {streams})")
    if exact:
        p.add_argument("--exact", action="store_true", help="rational arithmetic (rational tolls only)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="marytree", description="Moments and limit laws of additive functionals on m-ary search trees.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("moments", help="raw and centered moment tables from the recurrence")
    p.add_argument("--m", type=int, required=True, help="branching factor (>= 2)")
    p.add_argument("--toll", default="constant", help="toll spec, e.g. shape, power:beta=0.75,p=1")
    p.add_argument("--N", type=int, default=100, help="largest tree size")
    p.add_argument("--K", type=int, default=2, help="highest moment order")
    p.add_argument("--every", type=int, default=1, help="emit every k-th n (default 1)")
    _common(p, exact=True)

    p = sub.add_parser("simulate", help="Monte Carlo or exhaustive moments of the functional")
    p.add_argument("--m", type=int, required=True, help="branching factor (>= 2)")
    p.add_argument("--toll", default="constant", help="toll spec")
    p.add_argument("--n", type=int, required=True, help="number of keys")
    p.add_argument("--samples", type=int, default=10_000, help="number of random permutations")
    p.add_argument("--k-max", type=int, default=2, help="highest moment order")
    p.add_argument("--exhaustive", action="store_true", help="enumerate all n! permutations (n <= 10)")
    _common(p, seeded=True, exact=True)

    p = sub.add_parser("tree", help="build one tree and evaluate the functional on it")
    p.add_argument("--m", type=int, required=True, help="branching factor (>= 2)")
    p.add_argument("--toll", default="constant", help="toll spec")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--keys", help="comma-separated distinct insertion sequence")
    g.add_argument("--random", type=int, metavar="n", help="random permutation of 1..n")
    _common(p, seeded=True)

    p = sub.add_parser("roots", help="roots of the indicial polynomial, or the alpha table")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--m", type=int, help="roots for one m")
    g.add_argument("--m-max", type=int, help="alpha table for 3 <= m <= m_max")
    g.add_argument("--m0", type=float, metavar="beta", help="largest m with alpha_m < 1 + beta")
    p.add_argument("--method", choices=("companion", "log-branch"), help="root finder (default by m)")
    _common(p)

    p = sub.add_parser("transfer", help="transfer-theorem checks")
    tsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = tsub.add_parser("verify", help="exact solution against the asymptotic prediction")
    q.add_argument("--m", type=int, required=True, help="branching factor (>= 2)")
    q.add_argument("--toll", required=True, help="input sequence b_n as a toll spec")
    q.add_argument("--regime", required=True, choices=("linear", "nlogn", "power", "slow"),
                   help="linear: b=o(n); nlogn: b=K2(n+1)+h; power: n^v L(n), v>1; slow: n^beta L(n), 1/2<beta<1")
    q.add_argument("--N", type=int, default=10_000, help="largest n")
    q.add_argument("--K2", type=float, default=1.0, help="slope of the linear part (nlogn regime)")
    q.add_argument("--points", type=int, default=8, help="number of geometric grid points")
    _common(q)
    q = tsub.add_parser("ett", help="exact transfer solution compared with the recurrence")
    q.add_argument("--m", type=int, required=True, help="branching factor (>= 2)")
    q.add_argument("--toll", required=True, help="input sequence b_n as a toll spec")
    q.add_argument("--N", type=int, default=300, help="largest n")
    _common(q)
    q = tsub.add_parser("probe", help="oscillation probe of mu_n - mu (n+1)")
    q.add_argument("--m", type=int, required=True, help="branching factor (>= 2)")
    q.add_argument("--toll", default="constant", help="toll spec")
    q.add_argument("--N", type=int, default=20_000, help="largest n")
    q.add_argument("--windows", type=int, default=4, help="dyadic windows")
    q.add_argument("--threshold", type=float, default=1.0, help="amplitude ratio marking non-decay")
    _common(q)

    p = sub.add_parser("limitlaw", help="moments of the fixed-point law and sampler statistics")
    p.add_argument("--m", type=int, required=True, help="branching factor (>= 2)")
    p.add_argument("--beta", type=float, required=True, help="toll exponent (> 1/2, != 1)")
    p.add_argument("--K", type=int, default=4, help="highest moment order (cap 16)")
    p.add_argument("--sample", type=int, nargs=2, metavar=("DEPTH", "COUNT"), help="run the sampler")
    _common(p, seeded=True)
    p.set_defaults(format="json")

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--only", nargs="+", help="criteria by number or key: " + ", ".join(verify.KEYS))
    _common(p, seeded=True, streams=4)
    return ap


def _config(args) -> RunConfig:
    cfg = RunConfig(subcommand=args.cmd if args.cmd != "transfer" else f"transfer {args.action}",
                    m=getattr(args, "m", None), toll=getattr(args, "toll", None), N=getattr(args, "N", None),
                    K=getattr(args, "K", None), seed=getattr(args, "seed", None),
                    num_samples=getattr(args, "samples", None),
                    mode="rational" if getattr(args, "exact", False) else "float64",
                    format=args.format, output=args.output)
    skip = {"cmd", "action", "m", "toll", "N", "K", "seed", "samples", "exact", "format", "output", "threads"}
    cfg.extra = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    if args.threads < 1:
        raise ValidationError("--threads must be >= 1")
    cfg.validate()
    return cfg


def _write(cfg: RunConfig, tables: dict, payload: dict):
    text = dumps_json(cfg.echo(), payload) if cfg.format == "json" else dumps_csv(cfg.echo(), tables)
    path = cfg.output
    if path is None and os.environ.get(OUTPUT_DIR_ENV):
        name = cfg.subcommand.replace(" ", "-")
        path = str(Path(os.environ[OUTPUT_DIR_ENV]) / f"{name}.{cfg.format}")
    written = emit(text, path)
    if written is not None:
        print(f"wrote {written}", file=sys.stderr)


def cmd_moments(args, cfg):
    toll = parse_toll(args.toll, args.m)
    table = moments.centered_moments(args.m, toll, K=args.K, N=args.N, exact=args.exact)
    step = max(1, args.every)
    ns = [n for n in range(args.N + 1) if n % step == 0 or n == args.N]
    fmt = (lambda v: v) if args.exact else float
    rows = [(n, k, fmt(table.raw[k][n]), fmt(table.centered[k][n])) for n in ns for k in range(1, args.K + 1)]
    var = [(n, fmt(table.variance[n]), fmt(table.variance[n] / n) if n else 0) for n in ns]
    meta = {"center": table.center, "mean_slope": table.mean_slope, "mode": table.mode}
    _write(cfg, {"moments": (["n", "k", "raw", "centered"], rows),
                 "variance": (["n", "variance", "variance_over_n"], var)},
           {"meta": meta, "moments": [dict(zip(("n", "k", "raw", "centered"), r)) for r in rows],
            "variance": [dict(zip(("n", "variance", "variance_over_n"), r)) for r in var]})


def cmd_simulate(args, cfg):
    toll = parse_toll(args.toll, args.m)
    if args.exhaustive and args.exact:
        raw = exhaustive_exact_moments(args.m, args.n, toll, k_max=args.k_max)
        rows = [(k, raw[k]) for k in range(1, args.k_max + 1)]
        _write(cfg, {"moments": (["k", "raw"], rows)}, {"raw": {k: v for k, v in rows}})
        return
    st = monte_carlo_moments(args.m, args.n, toll, k_max=args.k_max, num_samples=args.samples, seed=args.seed,
                             num_streams=args.streams, threads=args.threads, exhaustive=args.exhaustive)
    rows = [(k, st.raw[k - 1], st.raw_se[k - 1], st.centered[k - 1], st.centered_se[k - 1])
            for k in range(1, args.k_max + 1)]
    _write(cfg, {"moments": (["k", "raw", "raw_se", "centered", "centered_se"], rows)}, {"stats": st})


def cmd_tree(args, cfg):
    if args.keys is not None:
        try:
            keys = [int(x) for x in args.keys.split(",") if x.strip()]
        except ValueError as exc:
            raise ValidationError(f"bad key list: {exc}") from None
    else:
        if args.random < 0:
            raise ValidationError("n must be >= 0")
        keys = (stream_rng(args.seed, 0).permutation(args.random) + 1).tolist()
    toll = parse_toll(args.toll, args.m)
    tree = build_tree(args.m, keys)
    value = eval_functional(tree, toll)
    prob = shape_prob(tree)
    rows = [(node.size, " ".join(map(str, node.keys)), len(node.children)) for node in tree.nodes()]
    _write(cfg, {"nodes": (["subtree_size", "keys", "children"], rows),
                 "summary": (["functional", "shape_probability"], [(value, prob)])},
           {"keys": keys, "functional": value, "shape_probability": prob, "tree": tree.to_dict()})


def cmd_roots(args, cfg):
    if args.m0 is not None:
        bound = indicial.m0(args.m0)
        _write(cfg, {"m0": (["beta", "m0"], [(args.m0, bound)])}, {"beta": args.m0, "m0": bound})
        return
    if args.m_max is not None:
        if args.m_max < 3:
            raise ValidationError("--m-max must be >= 3")
        table = indicial.alpha_table(args.m_max)
        cols = ["m", "alpha", "omega", "asymptote"]
        _write(cfg, {"alpha": (cols, table)}, {"alpha": [dict(zip(cols, r)) for r in table]})
        return
    method = None if args.method is None else args.method.replace("-", "_")
    rs = indicial.find_roots(args.m, method)
    rows = list(rs.rows())
    cols = ["m", "j", "re", "im", "residual"]
    _write(cfg, {"roots": (cols, rows)}, {"method": rs.method, "roots": [dict(zip(cols, r)) for r in rows]})


def _grid(N, points):
    lo = max(16, N // 2 ** (points - 1))
    return sorted({int(round(x)) for x in np.geomspace(lo, N, points)})


def cmd_transfer(args, cfg):
    m = args.m
    toll = parse_toll(args.toll, m)
    if args.action == "ett":
        b = toll.values(args.N)
        res = transfer.ett_solution(m, b)
        a = moments.solve_basic_recurrence(b, m)
        rows = [(n, res.a[n], a[n]) for n in range(args.N + 1)]
        _write(cfg, {"ett": (["n", "transfer", "recurrence"], rows)},
               {"max_rel_dev": transfer.relative_deviation(res.a, a), "imag_residue": res.imag_residue,
                "rows": rows})
        return
    if args.action == "probe":
        rep = transfer.periodicity_probe(m, toll, N=args.N, num_windows=args.windows, threshold=args.threshold)
        rows = [(lo, hi, amp) for lo, hi, amp in rep.windows]
        _write(cfg, {"windows": (["lo", "hi", "amplitude_over_sqrt_n"], rows),
                     "summary": (["classification", "ratio", "alpha", "omega", "empirical_omega", "spread"],
                                 [(rep.classification, rep.ratio, rep.alpha, rep.omega, rep.empirical_omega,
                                   rep.spread)])}, {"report": rep})
        return
    N = args.N
    b = toll.values(N)
    Hm1 = moments.harmonic(m) - 1.0
    if args.regime == "linear":
        mu = moments.mean_slope(m, toll)
        if mu is None:
            raise ValidationError("input is not o(n) with a convergent series; pick another regime")
        pred = transfer.att_predict(m, "linear", K1=float(mu) * Hm1)
    elif args.regime == "nlogn":
        n = np.arange(N + 1, dtype=np.float64)
        h = b - args.K2 * (n + 1)
        h_sum = float(np.sum(h / ((n + 1) * (n + 2))) + h[-1] / (N + 2))
        pred = transfer.att_predict(m, "nlogn", K2=args.K2, h_sum=h_sum)
    else:
        if toll.kind != "power":
            raise ValidationError(f"regime {args.regime} needs a power toll")
        beta, p = toll.params["beta"], toll.params["p"]
        if args.regime == "power":
            pred = transfer.more_transfers_predict(m, "d", p=p, v=beta, K4=1.0)
        else:
            mu = moments.mean_slope(m, toll)
            pred = transfer.more_transfers_predict(m, "b", beta=beta, p=p, K1=None if mu is None else float(mu) * Hm1)
    if not pred.valid:
        _write(cfg, {"transfer": (["regime", "note"], [(pred.regime, pred.note)])}, {"prediction": pred})
        return
    rep = transfer.verify_transfer(m, b, pred, _grid(N, args.points))
    _write(cfg, {"transfer": (["n", "a_n", "predicted", "normalized_residual"], rep.rows)},
           {"prediction": pred, "trend": rep.trend, "final_residual": rep.final_residual, "rows": rep.rows})


def cmd_limitlaw(args, cfg):
    params = limitlaw.g_moments(args.m, args.beta, args.K)
    rho2, valid = limitlaw.contraction_factor(args.m, args.beta)
    g1a, g1b = limitlaw.g1_closed(args.m, args.beta)
    payload = {"g": params.g, "rho2": rho2, "contraction_valid": valid, "g1_closed": [g1a, g1b],
               "fixed_point_residual": limitlaw.fixed_point_residual(params)}
    if args.K >= 2:
        payload["g2_closed"] = limitlaw.g2_closed(args.m, args.beta)
        payload["variance"] = params.variance
    if args.K >= 4:
        payload["carleman"] = limitlaw.carleman_growth_check(params)
    cls = "large" if args.beta > 1 else "moderate"
    if cls == "large" or args.beta < 1:
        payload["law"] = limitlaw.summary_normalization(args.m, cls, args.beta)
    tables = {"g": (["k", "g_k"], list(enumerate(params.g)))}
    if args.sample:
        depth, count = args.sample
        st = limitlaw.sample_Y_stats(args.m, args.beta, depth, count, seed=args.seed, num_streams=args.streams)
        payload["sampler"] = st
        tables["sampler"] = (list(st.to_dict()), [tuple(st.to_dict().values())])
    _write(cfg, tables, payload)


def cmd_verify(args, cfg) -> int:
    suite = verify.SuiteConfig(seed=args.seed, num_streams=args.streams, threads=args.threads)
    try:
        verify.select(args.only)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    to_file = args.output is not None or os.environ.get(OUTPUT_DIR_ENV)
    results = verify.run_suite(args.only, suite, on_result=lambda r: print(r.line(), flush=True))
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {', '.join(map(str, failed))}" if failed else ""))
    if to_file:
        rows = [(r.number, r.key, r.passed, r.line()) for r in results]
        _write(cfg, {"criteria": (["number", "key", "passed", "detail"], rows)}, {"criteria": results})
    return EXIT_ACCEPTANCE if failed else EXIT_OK


COMMANDS = {"moments": cmd_moments, "simulate": cmd_simulate, "tree": cmd_tree, "roots": cmd_roots,
            "transfer": cmd_transfer, "limitlaw": cmd_limitlaw, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        code = COMMANDS[args.cmd](args, cfg)
        return EXIT_OK if code is None else code
    except NumericalError as exc:
        print(f"marytree: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError, OSError) as exc:
        print(f"marytree: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
