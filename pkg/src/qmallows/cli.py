"""Command-line front end.

CSV schemas (columns are fixed):

  eval             op,q,alpha,pairs,log_prob,prob,tail_bound
  sample           replica,position,value
  simulate-asep    raw:          value,count,empirical,log_exact,exact
                   second-class: x,direction,jumps,occupation_time,rate,stderr,lo,hi,exact
                   classes:      site,class,fraction
  simulate-asepqm  x,count,empirical,log_exact,exact
  sixvertex        sample:       replica,<one column per cut>
                   exact/verify: family,heights,prob
  verify           criterion,name,passed,seconds
  asymptotics      y,scaled_pmf,logistic,scaled_cdf,cdf_limit,scaled_rate,rate_limit
  --trace          time,left,right,kind

Real numbers are written as decimal strings with 17 significant digits;
probabilities carry both a log-domain and a linear-domain field.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import acceptance, asep, measures, sampler, sixvertex
from .qseries import MallowsParams, TruncationPolicy
from .stats import EmpiricalDist, tv_distance

SEED_ENV = "QMALLOWS_SEED"
CHUNK = 5000


class UsageError(Exception):
    pass


class CheckFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def logprob_fields(lp) -> dict:
    return {"log_prob": num(lp), "prob": num(math.exp(lp))}


# ---- argument helpers -----------------------------------------------------

def parse_pairs(text: str) -> list:
    try:
        out = []
        for item in text.split(","):
            a, b = item.split(":")
            out.append((int(a), int(b)))
        return out
    except ValueError:
        raise UsageError(f"cannot parse pairs {text!r}; expected 'i:x,i:x,...'") from None


def parse_cuts(text: str) -> list:
    return [sixvertex.CutQuery(a, b) for a, b in parse_pairs(text)]


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def chunked(fn, n: int, seed: int, threads: int):
    """Run ``fn(count, rng)`` over fixed chunks of CHUNK replicas.

    Chunk c always uses stream c, so results do not depend on ``threads``.
    """
    sizes = [min(CHUNK, n - s) for s in range(0, n, CHUNK)]
    jobs = [(m, sampler.make_rng(seed, c)) for c, m in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        return list(ex.map(lambda job: fn(*job), jobs))


def resolve_output(args):
    """``--out`` takes a path; the values json/csv are accepted as a format for brevity."""
    fmt, path = args.format, args.out
    if path in ("json", "csv"):
        fmt, path = path, None
    return fmt or "json", path


def write_report(args, report: dict, rows: list, columns: list):
    fmt, path = resolve_output(args)
    if fmt == "json":
        text = json.dumps(report, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] for c in columns])
        text = buf.getvalue()
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def mallows(args) -> MallowsParams:
    try:
        return MallowsParams(args.q, args.alpha)
    except ValueError as e:
        raise UsageError(str(e)) from None


def policy(args) -> TruncationPolicy:
    return TruncationPolicy(tol=args.tol)


def law_rows(emp: EmpiricalDist, exact, key="value"):
    rows = []
    freqs = emp.freqs()
    shown = {v for v, lp in exact.items() if lp > math.log(1e-15)}
    for v in sorted(set(freqs) | shown):
        lp = exact.get(v, -math.inf)
        rows.append({key: v, "count": int(emp.counts[emp.support.index(v)]) if v in freqs else 0,
                     "empirical": num(freqs.get(v, 0.0)), "log_exact": num(lp), "exact": num(math.exp(lp))})
    return rows


# ---- subcommands ----------------------------------------------------------

def _eval_op(p, op, pairs, pol, M, direction):
    tail = 0.0
    pos = [i for i, _ in pairs]
    vals = [x for _, x in pairs]

    def one():
        if len(pairs) != 1:
            raise UsageError(f"{op} takes one pair")
        return pairs[0]

    if op == "pmf_single":
        i, x = one()
        lp = measures.pmf_single(p, i, x)
    elif op == "pmf_neighbors":
        if pos != list(range(pos[0], pos[0] + len(pos))):
            raise UsageError("pmf_neighbors needs consecutive increasing positions")
        lp = measures.pmf_neighbors(p, pos[0] - 1, vals)
    elif op == "pmf_decreasing":
        lp = measures.pmf_decreasing(p, pairs)
    elif op == "cdf_product":
        lp = measures.cdf_product(p, pairs)
    elif op == "pmf_two_separated":
        if len(pairs) != 2:
            raise UsageError("pmf_two_separated takes two pairs")
        lp = measures.pmf_two_separated(p, pos[0] - 1, pos[1] - pos[0] + 1, vals[0], vals[1])
    elif op == "pmf_gap_one_increasing":
        if len(pairs) != 2 or pos[1] - pos[0] != 2:
            raise UsageError("pmf_gap_one_increasing takes two pairs at positions j and j+2")
        lp = measures.pmf_gap_one_increasing(p, vals[0] - pos[0], vals[1] - pos[0])
    elif op in ("pmf_dsecond", "pmf_multiclass"):
        # pairs are class:position, classes 1..d for dsecond and d+1..2 for multiclass
        d = len(pairs)
        if op == "pmf_dsecond":
            if pos != list(range(1, d + 1)):
                raise UsageError("pmf_dsecond pairs are 1:x1,2:x2,... with x1 < x2 < ...")
            lp = measures.pmf_dsecond(p, vals)
        else:
            if pos != list(range(d + 1, 1, -1)):
                raise UsageError("pmf_multiclass pairs are d+1:x1,d:x2,...,2:xd")
            lp = measures.pmf_multiclass(p, vals)
    elif op == "pmf_asepqm":
        _, x = one()
        lp = measures.pmf_asepqm(p, M, x)
    elif op == "second_class_position_pmf":
        _, x = one()
        lp = measures.second_class_position_pmf(p, x)
    elif op == "second_class_rate":
        _, x = one()
        lp = math.log(measures.second_class_rate(p, x, direction))
    elif op == "go_pmf_displacement":
        c, d = one()
        lp = measures.go_pmf_displacement(p.q, c, d, pol)
    elif op == "oracle_mixture_pmf":
        if pos != list(range(pos[0], pos[0] + len(pos))):
            raise UsageError("oracle_mixture_pmf needs consecutive increasing positions")
        lp, tail = measures.oracle_mixture_pmf(p, pos[0] - 1, vals, policy=pol)
    elif op == "oracle_marginalized_pmf":
        lp, tail = measures.oracle_marginalized_pmf(p, pairs, pol)
    else:
        raise UsageError(f"unknown op {op!r}")
    return float(lp), float(tail)


EVAL_OPS = ["pmf_single", "pmf_neighbors", "pmf_decreasing", "cdf_product", "pmf_two_separated",
            "pmf_gap_one_increasing", "pmf_dsecond", "pmf_multiclass", "pmf_asepqm",
            "second_class_position_pmf", "second_class_rate", "go_pmf_displacement",
            "oracle_mixture_pmf", "oracle_marginalized_pmf"]


def cmd_eval(args):
    p = mallows(args)
    pairs = parse_pairs(args.pairs)
    try:
        lp, tail = _eval_op(p, args.op, pairs, policy(args), args.M, args.direction)
    except (ValueError, TypeError) as e:
        raise UsageError(str(e)) from None
    rec = {"op": args.op, "params": {"q": num(p.q), "alpha": num(p.alpha), "tol": num(args.tol)},
           "pairs": [list(pr) for pr in pairs], **logprob_fields(lp), "tail_bound": num(tail)}
    row = {"op": args.op, "q": num(p.q), "alpha": num(p.alpha), "pairs": args.pairs,
           "log_prob": rec["log_prob"], "prob": rec["prob"], "tail_bound": rec["tail_bound"]}
    write_report(args, rec, [row], ["op", "q", "alpha", "pairs", "log_prob", "prob", "tail_bound"])


def cmd_sample(args):
    p = mallows(args)
    pol = policy(args)
    parts = chunked(lambda m, rng: sampler.sample_windows(p, args.start, args.k, m, rng, pol)[0],
                    args.n, args.seed, args.threads)
    X = np.concatenate(parts) if parts else np.empty((0, args.k), dtype=np.int64)
    rows = [{"replica": r, "position": args.start + m, "value": int(X[r, m])}
            for r in range(X.shape[0]) for m in range(args.k)]
    rep = {"params": {"q": num(p.q), "alpha": num(p.alpha), "tol": num(args.tol)},
           "start": args.start, "k": args.k, "n": args.n, "seed": args.seed,
           "tv_bound": num(args.k * args.tol), "windows": X.tolist()}
    write_report(args, rep, rows, ["replica", "position", "value"])


def _write_trace(path, p, args):
    rng = sampler.make_rng(args.seed, 10**6)
    if args.start == "step":
        state = asep.AsepWindowState.identity(args.L)
    else:
        W = asep.stationary_windows(p, args.L, 1, rng)
        state = asep.AsepWindowState(-args.L, W[0])
    _, events = asep.simulate(state, p, args.t, rng)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "left", "right", "kind"])
        for e in events:
            w.writerow([num(e.time), e.bond[0], e.bond[1], e.kind])


def cmd_simulate_asep(args):
    p = mallows(args)
    rng = sampler.make_rng(args.seed, 0)
    base = {"params": {"q": num(p.q), "alpha": num(p.alpha)}, "L": args.L, "t": num(args.t),
            "replicas": args.replicas, "seed": args.seed, "mode": args.mode}
    if args.trace:
        _write_trace(args.trace, p, args)
    if args.mode == "second-class":
        run = asep.estimate_second_class_rates(p, args.L, args.t, args.replicas,
                                               range(-args.x_range, args.x_range + 1), rng,
                                               burn_in=args.burn_in, policy=policy(args))
        rows = []
        for e in run.estimates:
            rows.append({"x": e.x, "direction": e.direction, "jumps": e.jumps,
                         "occupation_time": num(e.occupation_time), "rate": num(e.rate),
                         "stderr": num(e.stderr), "lo": num(e.lo), "hi": num(e.hi),
                         "exact": num(measures.second_class_rate(p, e.x, e.direction))})
        rep = {**base, "estimates": rows, "insufficient": run.insufficient}
        cols = ["x", "direction", "jumps", "occupation_time", "rate", "stderr", "lo", "hi", "exact"]
        return write_report(args, rep, rows, cols)
    if args.start == "step":
        labels = np.tile(np.arange(-args.L, args.L + 1), (args.replicas, 1))
    else:
        labels = asep.stationary_windows(p, args.L, args.replicas, rng, policy(args))
    asep.evolve_ensemble(labels, p.q, args.t, rng)
    if args.mode == "raw":
        if abs(args.coord) > args.L:
            raise UsageError("--coord must lie in [-L, L]")
        emp = EmpiricalDist.from_samples(labels[:, args.coord + args.L])
        R = p.radius(1e-14, 2 * args.L) + abs(p.center)
        if args.start == "step":
            exact = {args.coord + d: float(measures.go_pmf_displacement(p.q, 0, d))
                     for d in range(-2 * args.L - 1, 2 * args.L + 2)}
            target = "balance-zero ergodic law"
        else:
            exact = {x: float(measures.pmf_single(p, args.coord, x))
                     for x in range(args.coord - R, args.coord + R + 1)}
            target = "product measure"
        rows = law_rows(emp, exact)
        tv = tv_distance(emp, {k: math.exp(v) for k, v in exact.items()})
        rep = {**base, "start": args.start, "coord": args.coord, "target": target,
               "tv": num(tv), "law": rows}
        return write_report(args, rep, rows, ["value", "count", "empirical", "log_exact", "exact"])
    thresholds = sorted(args.thresholds)
    classes = np.searchsorted(np.array(thresholds), labels, side="left")
    rows = []
    for s in range(labels.shape[1]):
        for c in range(len(thresholds) + 1):
            rows.append({"site": s - args.L, "class": c, "fraction": num(np.mean(classes[:, s] == c))})
    rep = {**base, "start": args.start, "thresholds": thresholds, "occupation": rows}
    write_report(args, rep, rows, ["site", "class", "fraction"])


def cmd_simulate_asepqm(args):
    p = mallows(args)
    rng = sampler.make_rng(args.seed, 0)
    try:
        run = asep.simulate_asepqm(p, args.M, args.L, args.t, args.burn_in, rng,
                                   replicas=args.replicas, policy=policy(args))
    except ValueError as e:
        raise UsageError(str(e)) from None
    exact = {x: float(measures.pmf_asepqm(p, args.M, x)) for x in range(-args.L, args.L + 1)}
    rows = law_rows(run.site_law, exact, key="x")
    net, se = run.flux_imbalance()
    tv = tv_distance(run.site_law, {k: math.exp(v) for k, v in exact.items()})
    rep = {"params": {"q": num(p.q), "alpha": num(p.alpha)}, "M": args.M, "L": args.L,
           "t": num(args.t), "replicas": args.replicas, "seed": args.seed, "tv": num(tv),
           "net_flux": [int(v) for v in net], "net_flux_stderr": [num(v) for v in se], "law": rows}
    write_report(args, rep, rows, ["x", "count", "empirical", "log_exact", "exact"])


def _law_rows(family, law):
    return [{"family": family, "heights": " ".join(map(str, k)), "prob": num(v)}
            for k, v in sorted(law.items())]


def cmd_sixvertex(args):
    try:
        vp = sixvertex.VertexParams(args.b1, args.b2)
    except ValueError as e:
        raise UsageError(str(e)) from None
    base = {"b1": num(vp.b1), "b2": num(vp.b2), "mode": args.mode, "seed": args.seed}
    if args.mode == "verify":
        if args.support_file:
            with open(args.support_file) as fh:
                sd = sixvertex.SupportData.from_json(json.load(fh))
        else:
            sd = sixvertex.example_support_data()
        dom = sixvertex.RectDomain(args.width, args.height) if args.width else None
        ok, witness = sixvertex.check_support_condition(sd)
        if not ok:
            raise CheckFailure(f"support condition fails at index {witness}")
        rng = sampler.make_rng(args.seed, 0)
        method = "montecarlo" if args.n else "exact"
        r = sixvertex.verify_shift_invariance(sd, vp, dom, method, args.n or 0, rng, args.max_vertices)
        law_a = {tuple(np.atleast_1d(k)): v for k, v in r.law_hat.items()}
        law_b = {tuple(np.atleast_1d(k)): v for k, v in r.law_tilde.items()}
        rows = _law_rows("hat", law_a) + _law_rows("tilde", law_b)
        rep = {**base, "support_data": sd.to_json(), "method": method, "deviation": num(r.deviation),
               "p_value": None if r.p_value is None else num(r.p_value), "laws": rows}
        return write_report(args, rep, rows, ["family", "heights", "prob"])
    if not args.cuts:
        raise UsageError("--cuts is required for sample and exact modes")
    cuts = parse_cuts(args.cuts)
    dom = sixvertex.RectDomain(args.width, args.height)
    try:
        for c in cuts:
            sixvertex._check_cut(dom, c)
    except ValueError as e:
        raise UsageError(str(e)) from None
    names = [f"h({c.x_hat + 0.5:g},{c.y_hat + 0.5:g})" for c in cuts]
    base.update(width=args.width, height=args.height, cuts=[[c.x_hat, c.y_hat] for c in cuts])
    if args.mode == "exact":
        law = sixvertex.enumerate_exact(vp, dom, cuts, args.max_vertices)
        rows = _law_rows("exact", law)
        return write_report(args, {**base, "law": rows}, rows, ["family", "heights", "prob"])
    parts = chunked(lambda m, rng: sixvertex.heights(sixvertex.sample_lattice(vp, dom, rng, m), cuts),
                    args.n, args.seed, args.threads)
    H = np.concatenate(parts) if parts else np.empty((0, len(cuts)), dtype=np.int64)
    rows = [{"replica": r, **{nm: int(v) for nm, v in zip(names, H[r])}} for r in range(H.shape[0])]
    write_report(args, {**base, "n": args.n, "heights": H.tolist()}, rows, ["replica"] + names)


def cmd_verify(args):
    def report(res):
        print(res.line(), file=sys.stderr, flush=True)
    results = acceptance.run_all(quick=args.quick, seed=args.seed, report=report)
    rows = [{"criterion": r.number, "name": r.name, "passed": r.passed, "seconds": num(r.seconds)}
            for r in results]
    rep = {"quick": args.quick, "seed": args.seed, "all_passed": all(r.passed for r in results),
           "criteria": [{**row, "details": _jsonable(r.details)} for row, r in zip(rows, results)]}
    write_report(args, rep, rows, ["criterion", "name", "passed", "seconds"])
    if not rep["all_passed"]:
        raise CheckFailure("acceptance checks failed: "
                           + ", ".join(str(r.number) for r in results if not r.passed))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return num(obj)
    return obj if obj is None or isinstance(obj, str) else str(obj)


def cmd_asymptotics(args):
    ys = np.linspace(args.y_min, args.y_max, args.points)
    tab = measures.asymptotic_check(args.epsilon, args.alpha, ys, k=args.k)
    cols = ["y", "scaled_pmf", "logistic", "scaled_cdf", "cdf_limit", "scaled_rate", "rate_limit"]
    rows = [{c: num(tab[c][j]) for c in cols} for j in range(len(ys))]
    rep = {"epsilon": num(args.epsilon), "alpha": num(args.alpha), "k": args.k, "table": rows}
    write_report(args, rep, rows, cols)


# ---- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qmallows", description=__doc__,
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, params=True):
        sp.add_argument("--out", help="output path (default stdout); 'json' or 'csv' select the format")
        sp.add_argument("--format", choices=["json", "csv"])
        sp.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        if params:
            sp.add_argument("--q", type=float, default=0.5)
            sp.add_argument("--alpha", type=float, default=1.0)
            sp.add_argument("--tol", type=float, default=1e-12)

    sp = sub.add_parser("eval", help="evaluate a closed-form law or an oracle")
    common(sp)
    sp.add_argument("--op", required=True, choices=EVAL_OPS)
    sp.add_argument("--pairs", required=True, help="'i:x,i:x,...' position:value pairs")
    sp.add_argument("--M", type=int, default=2, help="block size for pmf_asepqm")
    sp.add_argument("--direction", type=int, choices=[-1, 1], default=1)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sample", help="draw windows of consecutive values")
    common(sp)
    sp.add_argument("--start", type=int, default=0)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--n", type=int, default=10)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("simulate-asep", help="multi-species ASEP in a closed window")
    common(sp)
    sp.add_argument("--L", type=int, default=15)
    sp.add_argument("--t", type=float, default=10.0)
    sp.add_argument("--replicas", type=int, default=1000)
    sp.add_argument("--mode", choices=["raw", "second-class", "classes"], default="raw")
    sp.add_argument("--start", choices=["stationary", "step"], default="stationary")
    sp.add_argument("--coord", type=int, default=0)
    sp.add_argument("--thresholds", type=lambda s: [int(v) for v in s.split(",")], default=[0],
                    help="class boundaries, e.g. --thresholds=-1,1")
    sp.add_argument("--x-range", type=int, default=2)
    sp.add_argument("--burn-in", type=float, default=0.0)
    sp.add_argument("--trace", help="write the jump events of one replica to this CSV path")
    sp.set_defaults(func=cmd_simulate_asep)

    sp = sub.add_parser("simulate-asepqm", help="ASEP(q,M) with one second-class particle")
    common(sp)
    sp.add_argument("--M", type=int, default=2)
    sp.add_argument("--L", type=int, default=12)
    sp.add_argument("--t", type=float, default=400.0)
    sp.add_argument("--burn-in", type=float, default=None)
    sp.add_argument("--replicas", type=int, default=500)
    sp.set_defaults(func=cmd_simulate_asepqm)

    sp = sub.add_parser("sixvertex", help="colored stochastic six-vertex model")
    common(sp, params=False)
    sp.add_argument("--b1", type=float, default=0.3)
    sp.add_argument("--b2", type=float, default=0.6)
    sp.add_argument("--width", type=int, default=0)
    sp.add_argument("--height", type=int, default=0)
    sp.add_argument("--cuts", help="'x:y,...' integer parts of the half-integer cut points")
    sp.add_argument("--mode", choices=["sample", "exact", "verify"], default="sample")
    sp.add_argument("--support-file", help="JSON support data for verify mode")
    sp.add_argument("--n", type=int, default=0, help="replicas (verify: 0 means exact)")
    sp.add_argument("--max-vertices", type=int, default=80)
    sp.set_defaults(func=cmd_sixvertex)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    common(sp, params=False)
    sp.add_argument("--quick", action="store_true")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("asymptotics", help="scaled laws against their logistic limits")
    common(sp, params=False)
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--y-min", type=float, default=-3.0)
    sp.add_argument("--y-max", type=float, default=3.0)
    sp.add_argument("--points", type=int, default=13)
    sp.set_defaults(func=cmd_asymptotics)
    return ap


def _validate(args):
    for name in ("n", "k", "L", "replicas", "M", "points", "max_vertices"):
        v = getattr(args, name, None)
        if v is not None and v < 0:
            raise UsageError(f"--{name} must be non-negative")
    if getattr(args, "threads", 1) < 1:
        raise UsageError("--threads must be positive")
    if args.command == "sixvertex" and args.mode != "verify" and (args.width < 1 or args.height < 1):
        raise UsageError("--width and --height are required for sample and exact modes")
    if args.seed is None:
        args.seed = default_seed()


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        args.func(args)
        return 0
    except UsageError as e:
        print(e, file=sys.stderr)
        return 2
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except CheckFailure as e:
        print(e, file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
