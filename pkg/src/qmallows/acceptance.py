"""The acceptance checks, shared by ``qmallows verify`` and the test suite.

Each check returns a :class:`CheckResult`.  Thresholds are the same in
quick and full mode; quick mode only trims grids and sample sizes where
the statistical resolution stays well inside the threshold.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import asep, measures, sampler, sixvertex
from .qseries import IDENTITIES, MallowsParams, TruncationPolicy, mixture_weights, verify_identity
from .stats import EmpiricalDist, chi_square_gof, tv_distance

Q_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)
ALPHA_GRID = (0.25, 1.0, 4.0)

# Convention of the second-class laws that agrees with direct marginalization.
# Fixed once by check_dsecond_adjudication and asserted on every run since.
PINNED_DSECOND_CONVENTION = "inverse"


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number:2d} {self.name}: {'PASS' if self.passed else 'FAIL'} ({self.seconds:.1f}s)"


def _timed(number, name, fn, *args, **kw) -> CheckResult:
    t = time.perf_counter()
    passed, details = fn(*args, **kw)
    return CheckResult(number, name, bool(passed), details, time.perf_counter() - t)


def _identity_cases(q, a):
    yield "jacobi", dict(q=q, alpha=a)
    for z in range(-5, 6):
        yield "euler", dict(q=q, z=z)
    for n in range(0, 6):
        for x in range(-5, 6):
            yield "qbinomial", dict(q=q, n=n, x=x)
    for x in range(-5, 6):
        yield "single_site", dict(q=q, alpha=a, x=x)
    for k in (1, 2, 3):
        for xs in itertools.combinations_with_replacement(range(-5, 6), k):
            yield "neighbors", dict(q=q, alpha=a, x=list(xs))
    for x1 in range(-5, 6):
        for i in range(-5, 6, 2):
            for k in range(2, 6):
                for b in range(1, k):
                    yield "alternating", dict(q=q, alpha=a, x1=x1, i=i, b=b, k=k)


def check_identities(quick=False, seed=0):
    worst = {name: 0.0 for name in IDENTITIES}
    for q in Q_GRID:
        for a in ALPHA_GRID:
            for name, inputs in _identity_cases(q, a):
                worst[name] = max(worst[name], verify_identity(name, inputs))
    return max(worst.values()) < 1e-10, {"worst_relative_error": worst}


def check_mixture_oracle(quick=False, seed=0):
    worst, count = 0.0, 0
    qs = (0.3, 0.7) if quick else Q_GRID
    for q in qs:
        for a in ALPHA_GRID:
            p = MallowsParams(q, a)
            for k in (1, 2, 3):
                for xs in itertools.combinations(range(-4, 5), k):
                    closed = measures.pmf_neighbors(p, 0, xs)
                    oracle, _ = measures.oracle_mixture_pmf(p, 0, xs)
                    worst = max(worst, abs(math.expm1(oracle - closed)))
                    count += 1
                    if k == 1:
                        single = measures.pmf_single(p, 1, xs[0])
                        worst = max(worst, abs(math.expm1(oracle - single)))
    return worst < 1e-8, {"worst_relative_error": worst, "points": count}


def check_marginalization_oracle(quick=False, seed=0):
    worst, count = 0.0, 0
    qs = (0.3, 0.7) if quick else (0.1, 0.5, 0.9)
    for q in qs:
        for a in ALPHA_GRID:
            p = MallowsParams(q, a)
            for span in range(1, 7):
                for x1 in range(-3, 4):
                    for xk in range(-3, x1):
                        pv = [(0, x1), (span, xk)]
                        got = measures.pmf_decreasing(p, pv).prob
                        sep = measures.pmf_two_separated(p, -1, span + 1, x1, xk).prob
                        ref = measures.oracle_marginalized_pmf(p, pv)[0].prob
                        worst = max(worst, abs(got - ref), abs(sep - ref))
                        count += 1
            for x1 in range(-3, 4):
                for x3 in range(x1 + 1, 5):
                    got = measures.pmf_gap_one_increasing(p, x1, x3).prob
                    ref = measures.oracle_marginalized_pmf(p, [(0, x1), (2, x3)])[0].prob
                    worst = max(worst, abs(got - ref))
                    count += 1
            for vals in ([3, 1, -2], [2, 0, -1]):
                pv = list(zip((0, 2, 5), vals))
                got = measures.pmf_decreasing(p, pv).prob
                ref = measures.oracle_marginalized_pmf(p, pv)[0].prob
                worst = max(worst, abs(got - ref))
                count += 1
    return worst < 1e-9, {"worst_absolute_error": worst, "points": count}


def check_normalizations(quick=False, seed=0):
    sums = {}
    for q in (0.3, 0.5, 0.9):
        for a in ALPHA_GRID:
            p = MallowsParams(q, a)
            R = p.radius(1e-13, 5) + abs(p.center)
            xs = range(-R, R + 1)
            sums[f"single q={q} a={a}"] = math.fsum(measures.pmf_single(p, 0, x).prob for x in xs)
            sums[f"weights q={q} a={a}"] = math.fsum(mixture_weights(q, a)[1])
            RM = R // 2 + 2
            sums[f"asepqm M=2 q={q} a={a}"] = math.fsum(
                measures.pmf_asepqm(p, 2, x).prob for x in range(-RM, RM + 1))
            Rd = p.radius(1e-11, 5) + abs(p.center)
            sums[f"dsecond q={q} a={a}"] = math.fsum(
                measures.pmf_dsecond(p, (x1, x2)).prob
                for x1 in range(-Rd, Rd + 1) for x2 in range(x1 + 1, Rd + 2))
        for c in (-1, 0, 2):
            R = int(math.ceil(math.log(1e-13) / math.log(q))) + 5
            sums[f"ergodic q={q} c={c}"] = math.fsum(
                measures.go_pmf_displacement(q, c, d).prob for d in range(-R + c, R + c + 1))
    worst = max(abs(s - 1) for s in sums.values())
    return worst < 1e-8, {"worst_deviation": worst, "sums": sums}


def check_reversibility(quick=False, seed=0):
    res = {}
    for n in range(2, 6):
        for q in (0.1, 0.5, 0.9):
            res[f"n={n} q={q}"] = asep.exact_reversibility_check(n, q)
    rows = 0.0
    for q in (0.1, 0.5, 0.9):
        _, Q, _ = asep.asep_generator(4, q)
        rows = max(rows, float(np.max(np.abs(Q.sum(axis=1)))))
    worst = max(res.values())
    return worst <= 1e-12 and rows <= 1e-14, {"worst_residual": worst, "worst_row_sum": rows}


def check_sampler(quick=False, seed=0):
    tol = 1e-9
    policy = TruncationPolicy(tol=tol)
    worst = 0.0
    for q, a in itertools.product((0.3, 0.5, 0.7), ALPHA_GRID):
        p = MallowsParams(q, a)
        for k in (1, 2, 3):
            worst = max(worst, sampler.exhaustive_tv(p, 0, k, policy))
    p = MallowsParams(0.5, 1.0)
    rng = sampler.make_rng(seed, 6)
    X, _ = sampler.sample_windows(p, 0, 2, 100_000, rng)
    law = {x: measures.pmf_single(p, 0, x).prob for x in range(-60, 61)}
    _, _, pval = chi_square_gof(sampler.empirical_distribution(X, [0]), law)
    law1 = {x: measures.pmf_single(p, 1, x).prob for x in range(-60, 61)}
    _, _, pval1 = chi_square_gof(sampler.empirical_distribution(X, [1]), law1)
    ok = worst <= 3 * tol and min(pval, pval1) > 1e-3
    return ok, {"worst_tv": worst, "bound": 3 * tol, "gof_p_values": [pval, pval1]}


def check_asep_stationarity(quick=False, seed=0):
    rng = sampler.make_rng(seed, 7)
    L = 20
    n = 20_000 if quick else 40_000
    tvs = {}
    for a in (1.0, 2.5):
        p = MallowsParams(0.5, a)
        W = asep.stationary_windows(p, L, n, rng)
        asep.evolve_ensemble(W, p.q, 10.0, rng)
        for c in (-3, 0, 4):
            law = {x: measures.pmf_single(p, c, x).prob for x in range(-60, 61)}
            tvs[f"alpha={a} coord={c}"] = tv_distance(EmpiricalDist.from_samples(W[:, c + L]), law)
    p = MallowsParams(0.5, 1.0)
    step = {}
    target = {d: measures.go_pmf_displacement(0.5, 0, d).prob for d in range(-40, 41)}
    single = {d: measures.pmf_single(p, 0, d).prob for d in range(-40, 41)}
    for t in (3.0, 30.0):
        e = asep.run_step_convergence(p, L, t, 10_000, [0], rng)
        step[t] = {"tv_to_balance_zero_law": tv_distance(e, target), "tv_to_single_site": tv_distance(e, single)}
    ok = max(tvs.values()) <= 0.02 and step[30.0]["tv_to_balance_zero_law"] < step[3.0]["tv_to_balance_zero_law"]
    return ok, {"stationary_tv": tvs, "step_start": step, "replicas": n}


def check_second_class_rates(quick=False, seed=0):
    p = MallowsParams(0.5, 1.0)
    rng = sampler.make_rng(seed, 8)
    run = asep.estimate_second_class_rates(p, 15, 400.0, 2000 if quick else 4000, range(-2, 3), rng)
    z = {}
    for e in run.estimates:
        exact = measures.second_class_rate(p, e.x, e.direction)
        z[f"x={e.x} dir={e.direction:+d}"] = (e.rate - exact) / e.stderr
    balance = 0.0
    for a in (1.0, 0.4, 3.0):
        pa = MallowsParams(0.5, a)
        for x in range(-10, 11):
            lhs = measures.second_class_position_pmf(pa, x) + math.log(measures.second_class_rate(pa, x, 1))
            rhs = measures.second_class_position_pmf(pa, x + 1) + math.log(measures.second_class_rate(pa, x + 1, -1))
            balance = max(balance, abs(lhs - rhs))
    ok = max(abs(v) for v in z.values()) <= 3 and balance <= 1e-12 and not run.insufficient
    return ok, {"z_scores": z, "log_balance_residual": balance}


def _dsecond_oracle(p, xs):
    total = 0.0
    for vals in itertools.permutations(range(1, len(xs) + 1)):
        total += measures.oracle_marginalized_pmf(p, list(zip(xs, vals)))[0].prob
    return total


def check_dsecond_adjudication(quick=False, seed=0):
    worst = {"inverse": 0.0, "direct": 0.0}
    for q, a in ((0.5, 1.7), (0.3, 0.4), (0.7, 2.5)):
        p = MallowsParams(q, a)
        for xs in ((0, 1), (0, 2), (-1, 3), (1, 2), (-2, 0)):
            ref = _dsecond_oracle(p, xs)
            for conv in worst:
                worst[conv] = max(worst[conv], abs(measures.pmf_dsecond(p, xs, conv).prob - ref))
    matching = [c for c, w in worst.items() if w <= 1e-8]
    ok = matching == [PINNED_DSECOND_CONVENTION]
    return ok, {"worst_error": worst, "matching": matching, "pinned": PINNED_DSECOND_CONVENTION}


def check_shift_invariance(quick=False, seed=0):
    vp = sixvertex.VertexParams(0.3, 0.6)
    sd = sixvertex.example_support_data()
    sup = sixvertex.supports(sd)
    supports_ok = sup[0][0] == [1, 2, 5, 6] and sup[1][0] == [5] and sixvertex.check_support_condition(sd)[0]
    devs = {"example S=2": sixvertex.verify_shift_invariance(sd, vp).deviation,
            "example S=3": sixvertex.verify_shift_invariance(sd.with_S(3), vp).deviation}
    rng = sampler.make_rng(seed, 10)
    instances = sixvertex.random_instances(rng, 10 if quick else 20)
    verdicts_agree = True
    for n, inst in enumerate(instances):
        devs[f"random {n} S={inst.S}"] = sixvertex.verify_shift_invariance(inst, vp).deviation
        other = inst.with_S(inst.S + 1)
        verdicts_agree &= sixvertex.check_support_condition(other)[0]
        devs[f"random {n} S={other.S}"] = sixvertex.verify_shift_invariance(other, vp).deviation
    mc = sixvertex.verify_shift_invariance(sd, vp, mode="montecarlo", n=10_000, rng=rng)
    ok = (supports_ok and verdicts_agree and len(instances) == (10 if quick else 20)
          and max(devs.values()) <= 1e-12 and mc.deviation <= 0.03)
    return ok, {"max_exact_deviation": max(devs.values()), "instances": len(instances),
                "mc_tv": mc.deviation, "mc_p_value": mc.p_value, "supports_ok": supports_ok}


LIMIT_CUTS = [sixvertex.CutQuery(0, -1), sixvertex.CutQuery(-1, 0), sixvertex.CutQuery(1, 1)]


def check_asep_limit(quick=False, seed=0):
    rng = sampler.make_rng(seed, 11)
    q, t = 0.5, 2.0
    n = 30_000 if quick else 100_000
    ref = EmpiricalDist.from_samples(sixvertex.asep_step_heights(q, t, LIMIT_CUTS, n, rng))
    tvs = []
    for eps in (0.2, 0.1, 0.05):
        h = sixvertex.asep_limit_heights(q, eps, t, LIMIT_CUTS, n, rng)
        tvs.append(tv_distance(EmpiricalDist.from_samples(h), ref))
    ok = tvs[0] > tvs[1] > tvs[2] and tvs[2] <= 0.03
    return ok, {"epsilon": [0.2, 0.1, 0.05], "tv": tvs, "replicas": n}


def check_asepqm(quick=False, seed=0):
    p = MallowsParams(0.5, 1.0)
    rng = sampler.make_rng(seed, 12)
    run = asep.simulate_asepqm(p, 2, 12, 400.0, None, rng, replicas=500)
    law = {x: measures.pmf_asepqm(p, 2, x).prob for x in range(-40, 41)}
    tv = tv_distance(run.site_law, law)
    worst = 0.0
    for q in (0.3, 0.5, 0.9):
        for a in ALPHA_GRID:
            pq = MallowsParams(q, a)
            for M in (1, 2, 3):
                for x in range(-6, 7):
                    closed = measures.pmf_asepqm(pq, M, x).prob
                    direct = math.fsum(measures.pmf_single(pq, 0, x * M + i).prob for i in range(1, M + 1))
                    worst = max(worst, abs(closed - direct))
    net, se = run.flux_imbalance()
    zmax = float(np.max(np.abs(net[se > 0] / se[se > 0]))) if np.any(se > 0) else 0.0
    return tv <= 0.02 and worst <= 1e-13, {"tv": tv, "closed_vs_sum": worst, "max_flux_z": zmax}


def check_asymptotics(quick=False, seed=0):
    y = np.linspace(-3, 3, 61)
    rows = measures.asymptotic_check(1e-3, 1.0, y, k=2)
    peak = float(np.max(rows["logistic"]))
    pmf_err = float(np.max(np.abs(rows["scaled_pmf"] - rows["logistic"])))
    cdf_err = float(np.max(np.abs(rows["scaled_cdf"] - rows["cdf_limit"])))
    rate_err = float(np.max(np.abs(rows["scaled_rate"] / rows["rate_limit"] - 1)))
    ok = pmf_err <= 1e-2 * peak and cdf_err <= 1e-2 and rate_err <= 1e-2
    return ok, {"pmf_error_over_peak": pmf_err / peak, "cdf_error": cdf_err, "rate_relative_error": rate_err}


CHECKS = [
    (1, "q-series identities", check_identities),
    (2, "mixture oracle", check_mixture_oracle),
    (3, "marginalization oracle", check_marginalization_oracle),
    (4, "normalizations", check_normalizations),
    (5, "exact reversibility", check_reversibility),
    (6, "sampler exactness", check_sampler),
    (7, "ASEP stationarity and convergence", check_asep_stationarity),
    (8, "second-class rates", check_second_class_rates),
    (9, "d-second-class convention", check_dsecond_adjudication),
    (10, "six-vertex shift invariance", check_shift_invariance),
    (11, "six-vertex ASEP limit", check_asep_limit),
    (12, "ASEP(q,M) second-class law", check_asepqm),
    (13, "asymptotics", check_asymptotics),
]


def run_check(number: int, quick: bool = False, seed: int = 0) -> CheckResult:
    for num, name, fn in CHECKS:
        if num == number:
            return _timed(num, name, fn, quick=quick, seed=seed)
    raise KeyError(number)


def run_all(quick: bool = False, seed: int = 0, report=None) -> list:
    out = []
    for num, _, _ in CHECKS:
        res = run_check(num, quick, seed)
        if report:
            report(res)
        out.append(res)
    return out
