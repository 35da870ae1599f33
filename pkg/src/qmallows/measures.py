"""Closed-form laws of the Mallows product measure and two independent oracles.

Conventions
-----------
* ``pmf_single(p, i, x)`` is P(omega(i) = x); the displacement is x - i.
* ``pmf_neighbors(p, i, values)`` is P(omega(i+1) = x_1, ..., omega(i+k) = x_k).
* Position/value pairs are sequences of ``(position, value)`` tuples.
* All probabilities are returned as :class:`~qmallows.qseries.LogProb`.

Half-integer exponents are written as ``(2n - 1) * logq / 2`` so that the
integer part is never rounded.
"""
from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .qseries import (
    DEFAULT_POLICY,
    LogProb,
    MallowsParams,
    TruncationError,
    TruncationPolicy,
    log1pexp,
    log_qpoch_inf,
    log_qpoch_table,
    mixture_range,
    mixture_weight,
)

NEG_INF = -math.inf


def _half(n2, logq):
    """(n2 / 2) * logq for an integer numerator ``n2``."""
    return n2 * logq / 2


def _log_single_disp(logq, logalpha, d):
    """log of the single-site displacement law f(d); vectorizes over ``d``."""
    d = np.asarray(d)
    t = logalpha + _half(2 * d - 1, logq)
    out = math.log1p(-math.exp(logq)) + t - log1pexp(t) - log1pexp(t + logq)
    return out if out.ndim else float(out)


def _log_neighbors_sorted_disp(logq, logalpha, ds):
    """log P(D_1 = d_1, ..., D_k = d_k) for weakly increasing displacements."""
    k = len(ds)
    j = np.arange(1, k + 1)
    u = np.asarray(ds) + 2 * j - k - 1
    return float(-0.5 * k * (k - 1) * logq + np.sum(_log_single_disp(logq, logalpha, u)))


def inversions(seq) -> int:
    """Number of pairs a < b with seq[a] > seq[b]."""
    return sum(1 for a, b in combinations(seq, 2) if a > b)


def _check_pairs(pv):
    pv = [(int(i), int(x)) for i, x in pv]
    if not pv:
        raise ValueError("need at least one (position, value) pair")
    pos = [i for i, _ in pv]
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ValueError(f"positions must be strictly increasing: {pos}")
    vals = [x for _, x in pv]
    if len(set(vals)) != len(vals):
        raise ValueError(f"values must be distinct: {vals}")
    return pv


def _point(flag: bool) -> LogProb:
    return LogProb(0.0 if flag else NEG_INF)


# ---- closed forms ---------------------------------------------------------

def pmf_single(p: MallowsParams, i: int, x: int) -> LogProb:
    """P(omega(i) = x) = (1-q) a q^{d-1/2} / ((1 + a q^{d-1/2})(1 + a q^{d+1/2})), d = x - i."""
    if p.degenerate:
        return _point(x == i)
    return LogProb(_log_single_disp(p.logq, p.logalpha, x - i))


def pmf_neighbors(p: MallowsParams, i: int, values) -> LogProb:
    """Joint law of ``values`` at the consecutive positions i+1, ..., i+k.

    Values in any order are allowed: each inversion of the word costs a
    factor q relative to the increasingly sorted arrangement.
    """
    values = [int(v) for v in values]
    k = len(values)
    if k == 0:
        raise ValueError("need at least one value")
    if len(set(values)) != k:
        raise ValueError(f"values must be distinct: {values}")
    if p.degenerate:
        return _point(all(v == i + j for j, v in enumerate(values, 1)))
    ys = np.sort(values)
    j = np.arange(1, k + 1)
    u = ys - i + j - k - 1
    lp = (inversions(values) - 0.5 * k * (k - 1)) * p.logq
    return LogProb(lp + float(np.sum(_log_single_disp(p.logq, p.logalpha, u))))


def log_pmf_neighbors_batch(p: MallowsParams, i: int, X) -> np.ndarray:
    """Row-wise log pmf_neighbors for an (n, k) integer array; repeated values give -inf."""
    X = np.atleast_2d(np.asarray(X, dtype=np.int64))
    n, k = X.shape
    a, b = np.triu_indices(k, 1)
    inv = np.sum(X[:, a] > X[:, b], axis=1)
    distinct = ~np.any(X[:, a] == X[:, b], axis=1)
    if p.degenerate:
        ok = np.all(X == i + np.arange(1, k + 1), axis=1)
        return np.where(ok, 0.0, NEG_INF)
    ys = np.sort(X, axis=1)
    u = ys - i + np.arange(1, k + 1) - k - 1
    out = (inv - 0.5 * k * (k - 1)) * p.logq + _log_single_disp(p.logq, p.logalpha, u).sum(axis=1)
    return np.where(distinct, out, NEG_INF)


def pmf_decreasing(p: MallowsParams, pv) -> LogProb:
    """Product formula for strictly decreasing values at increasing positions."""
    pv = _check_pairs(pv)
    vals = [x for _, x in pv]
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise ValueError(f"values must be strictly decreasing: {vals}")
    if p.degenerate:
        return _point(all(x == i for i, x in pv))
    return LogProb(sum(_log_single_disp(p.logq, p.logalpha, x - i) for i, x in pv))


def cdf_product(p: MallowsParams, pv) -> LogProb:
    """P(omega(i_j) <= x_j for all j) for weakly decreasing x_j at increasing i_j."""
    pv = [(int(i), int(x)) for i, x in pv]
    pos = [i for i, _ in pv]
    vals = [x for _, x in pv]
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ValueError(f"positions must be strictly increasing: {pos}")
    if any(b > a for a, b in zip(vals, vals[1:])):
        raise ValueError(f"values must be weakly decreasing: {vals}")
    if p.degenerate:
        return _point(all(i <= x for i, x in pv))
    return LogProb(-sum(float(log1pexp(p.logalpha + _half(2 * (x - i) + 1, p.logq))) for i, x in pv))


def pmf_two_separated(p: MallowsParams, i: int, k: int, x1: int, xk: int) -> LogProb:
    """P(omega(i+1) = x1, omega(i+k) = xk) for x1 > xk."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if x1 <= xk:
        raise ValueError("need x1 > xk")
    return pmf_decreasing(p, [(i + 1, x1), (i + k, xk)])


def pmf_gap_one_increasing(p: MallowsParams, x1: int, x3: int) -> LogProb:
    """P(omega(0) = x1, omega(2) = x3) for x1 < x3, as a two-term expression."""
    if x1 >= x3:
        raise ValueError("need x1 < x3")
    if p.degenerate:
        return _point(x1 == 0 and x3 == 2)
    lq, la, q = p.logq, p.logalpha, p.q

    def lg(n2):
        return float(log1pexp(la + _half(n2, lq)))

    log_t1 = (2 * math.log1p(-q) + 2 * la + (x1 + x3 - 6) * lq
              - lg(2 * x1 - 5) - lg(2 * x1 - 3) - lg(2 * x3 - 3) - lg(2 * x3 - 1))
    # second term over first: (q^2 - 1)(1 + a q^{x3-3/2}) / ((1 + a q^{x1-1/2})(1 + a q^{x3+1/2}))
    log_ratio = lg(2 * x3 - 3) - lg(2 * x1 - 1) - lg(2 * x3 + 1)
    return LogProb(log_t1 + math.log1p(-(1 - q * q) * math.exp(log_ratio)))


def blocking_prob(p: MallowsParams, i: int):
    """Return ``(P(eta_i = 1), P(omega(i) <= 0))`` for the projected particle system."""
    if p.degenerate:
        occ = i > 0
        return _point(occ), _point(not occ)
    t = -p.logalpha + _half(2 * i - 1, p.logq)
    occupied = LogProb(-float(log1pexp(t)))
    hole = LogProb(t - float(log1pexp(t)))
    assert abs(occupied.prob + hole.prob - 1.0) < 1e-12
    return occupied, hole


def _log_dsecond_formula(logq, logalpha, q, xs):
    d = len(xs)
    out = d * logalpha + _half(2 * sum(xs) - d * (2 * d + 1), logq)
    out += sum(math.log1p(-q ** m) for m in range(1, d + 1))
    for j, x in enumerate(xs, 1):
        out -= float(log1pexp(logalpha + _half(2 * (x + j - d) - 3, logq)))
        out -= float(log1pexp(logalpha + _half(2 * (x + j - d) - 1, logq)))
    return out


def _alpha_for(p: MallowsParams, convention: str) -> float:
    if convention == "inverse":
        return -p.logalpha
    if convention == "direct":
        return p.logalpha
    raise ValueError(f"convention must be 'inverse' or 'direct', got {convention!r}")


def pmf_dsecond(p: MallowsParams, positions, convention: str = "inverse") -> LogProb:
    """Joint law of the d second-class particles (values 1..d) at x_1 < ... < x_d.

    ``convention="inverse"`` substitutes 1/alpha into the closed form.  This is
    the version that agrees with direct marginalization of the measure; the
    ``"direct"`` form is the law of the values 1..d under the inverse permutation.
    The two coincide at alpha = 1.
    """
    xs = [int(x) for x in positions]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError(f"positions must be strictly increasing: {xs}")
    la = _alpha_for(p, convention)
    if p.degenerate:
        return _point(xs == list(range(1, len(xs) + 1)))
    return LogProb(_log_dsecond_formula(p.logq, la, p.q, xs))


def pmf_multiclass(p: MallowsParams, positions, convention: str = "inverse") -> LogProb:
    """P(classes d+1, d, ..., 2 sit at x_1, ..., x_d), i.e. omega(x_m) = d + 1 - m.

    The power of q is the inversion number of the permutation listing the
    positions from the largest to the smallest.
    """
    xs = [int(x) for x in positions]
    d = len(xs)
    if len(set(xs)) != d:
        raise ValueError(f"positions must be distinct: {xs}")
    la = _alpha_for(p, convention)
    if p.degenerate:
        return _point(all(x == d + 1 - m for m, x in enumerate(xs, 1)))
    sigma = sorted(range(d), key=lambda m: -xs[m])
    lq = p.logq
    out = inversions(sigma) * lq + d * math.log1p(-p.q) + d * la + _half(2 * sum(xs) - d * (2 * d + 1), lq)
    for j, y in enumerate(sorted(xs), 1):
        out -= float(log1pexp(la + _half(2 * (y + j - d) - 3, lq)))
        out -= float(log1pexp(la + _half(2 * (y + j - d) - 1, lq)))
    return LogProb(out)


def second_class_position_pmf(p: MallowsParams, x: int) -> LogProb:
    """P(omega(x) = 0): law of the position of the second-class particle."""
    return pmf_single(p, x, 0)


def _log_flux_right(p: MallowsParams, x: int) -> float:
    # stationary probability flux of the second-class particle across the bond (x, x+1)
    lq, la = p.logq, p.logalpha
    return (math.log1p(-p.q) + la + _half(-2 * x - 1, lq)
            - float(log1pexp(la + _half(-2 * x + 1, lq)))
            - float(log1pexp(la + _half(-2 * x - 3, lq))))


def second_class_rate(p: MallowsParams, x: int, direction: int, reference: str = "position") -> float:
    """Jump rate of the second-class particle from x to x + direction at stationarity.

    The rate is the stationary flux over the bond divided by the probability
    of sitting at x.  ``reference="position"`` divides by P(omega(x) = 0), the
    actual occupation law, and gives the conditional rate seen in simulation.
    ``reference="displacement"`` divides by P(omega(0) - 0 = x) instead; this
    is the symmetric closed form q^{-2x}(1+a q^{x-1/2})(1+a q^{x+1/2}) / ...
    and equals the first one only when alpha = 1.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if p.degenerate:
        raise ValueError("second-class rates need 0 < q < 1")
    flux = _log_flux_right(p, x if direction == 1 else x - 1)
    if reference == "position":
        pi = _log_single_disp(p.logq, p.logalpha, -x)
    elif reference == "displacement":
        pi = _log_single_disp(p.logq, p.logalpha, x)
    else:
        raise ValueError(f"reference must be 'position' or 'displacement', got {reference!r}")
    return math.exp(flux - pi)


def pmf_asepqm(p: MallowsParams, M: int, x: int, convention: str = "direct") -> LogProb:
    """Mass of the block [xM+1, (x+1)M] under the single-site law.

    With ``convention="direct"`` this is P(omega(0) in block x).  The site
    of the second-class particle in ASEP(q, M) has the ``"inverse"`` law,
    P(omega(s) = 0 for some s in block x); both agree at alpha = 1.
    """
    if M < 1:
        raise ValueError("M must be positive")
    la = _alpha_for(p, convention)
    if p.degenerate:
        return _point(x == -1)
    lq = p.logq
    out = (math.log1p(-p.q ** M) + la + _half(2 * x * M + 1, lq)
           - float(log1pexp(la + _half(2 * (x + 1) * M + 1, lq)))
           - float(log1pexp(la + _half(2 * x * M + 1, lq))))
    ds = x * M + np.arange(1, M + 1)
    check = float(np.logaddexp.reduce(_log_single_disp(lq, la, ds)))
    assert abs(check - out) < 1e-9 * max(1.0, abs(out)), (check, out)
    return LogProb(out)


def asymptotic_check(epsilon: float, alpha: float, y, k: int = 2) -> dict:
    """Scaled closed forms at q = exp(-epsilon), x = floor(y / epsilon), next to their limits.

    The CDF column uses the k values y, y - 1/2, ..., at consecutive positions.
    The rate column uses the symmetric ("displacement") form of the jump rate.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p = MallowsParams(math.exp(-epsilon), alpha)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    rows = {key: np.empty(len(y)) for key in
            ("scaled_pmf", "logistic", "scaled_cdf", "cdf_limit", "scaled_rate", "rate_limit")}
    for n, yy in enumerate(y):
        x = math.floor(yy / epsilon)
        rows["scaled_pmf"][n] = pmf_single(p, 0, x).prob / epsilon
        rows["logistic"][n] = alpha * math.exp(-yy) / (1 + alpha * math.exp(-yy)) ** 2
        ys = [yy - 0.5 * j for j in range(k)]
        pv = [(j, math.floor(v / epsilon)) for j, v in enumerate(ys)]
        rows["scaled_cdf"][n] = cdf_product(p, pv).prob
        rows["cdf_limit"][n] = float(np.prod([1 / (1 + alpha * math.exp(-v)) for v in ys]))
        rows["scaled_rate"][n] = second_class_rate(p, x, +1, reference="displacement")
        rows["rate_limit"][n] = math.exp(2 * yy) * (1 + alpha * math.exp(-yy)) ** 2 / (1 + alpha * math.exp(yy)) ** 2
    rows["y"] = y
    return rows


# ---- ergodic components -------------------------------------------------

def _terms_converged(log_terms: np.ndarray, total: float, tol: float) -> bool:
    """Geometric tail check on the last two entries of a decaying log-series."""
    if len(log_terms) < 2 or not np.isfinite(total):
        return False
    last, prev = log_terms[-1], log_terms[-2]
    if not np.isfinite(last):
        return not np.isfinite(prev)
    rho = math.exp(last - prev) if np.isfinite(prev) else 1.0
    if rho >= 0.5:
        return False
    return last + math.log(rho / (1 - rho)) < total + math.log(tol)


def go_pmf_displacement(q: float, c: int, d: int, policy: TruncationPolicy = DEFAULT_POLICY) -> LogProb:
    """Single-displacement law of the balance-c ergodic Mallows measure."""
    if q == 0.0:
        return _point(d == c)
    return go_pmf_joint(q, c, [d], policy)


def go_pmf_joint(q: float, c: int, ds, policy: TruncationPolicy = DEFAULT_POLICY) -> LogProb:
    """Joint law of the displacements D_1 <= ... <= D_k of the balance-c ergodic measure.

    The constraints pin every index except the last ``a_k``: for i < k the
    ``a_i`` run over 0..d_{i+1}-d_i, ``b_{i+1}`` is the complement, and
    ``b_1 = d_1 - c + sum(a)``.  The sum over ``a_k`` is truncated by a
    geometric tail bound.
    """
    ds = [int(d) for d in ds]
    k = len(ds)
    if k == 0:
        raise ValueError("need at least one displacement")
    if any(b < a for a, b in zip(ds, ds[1:])):
        raise ValueError(f"displacements must be weakly increasing: {ds}")
    if q == 0.0:
        return _point(all(d == c for d in ds))
    lq = math.log(q)
    gaps = [b - a for a, b in zip(ds, ds[1:])]
    grids = np.meshgrid(*[np.arange(g + 1) for g in gaps], indexing="ij") if gaps else []
    box = np.stack([g.ravel() for g in grids], axis=1) if gaps else np.zeros((1, 0), dtype=int)
    span = max([abs(ds[0] - c)] + gaps)
    n_ak = 16
    while True:
        ak = np.arange(n_ak)
        a = np.concatenate([np.repeat(box[:, None, :], n_ak, axis=1),
                            np.broadcast_to(ak[None, :, None], (len(box), n_ak, 1))], axis=2)
        b = np.empty_like(a)
        b[..., 0] = ds[0] - c + a.sum(axis=2)
        for j in range(1, k):
            b[..., j] = gaps[j - 1] - a[..., j - 1]
        valid = (b >= 0).all(axis=2)
        bc = np.where(valid[..., None], b, 0)
        # exponent sum_{i <= j} (b_i + 1)(a_j + 1)
        cb = np.cumsum(bc + 1, axis=2)
        expo = np.sum(cb * (a + 1), axis=2)
        table = log_qpoch_table(q, int(max(bc.max(), a.max())) + 1)
        lt = expo * lq - table[bc].sum(axis=2) - table[a].sum(axis=2)
        lt = np.where(valid, lt, NEG_INF)
        col = np.logaddexp.reduce(lt, axis=0)
        total = float(np.logaddexp.reduce(col))
        if _terms_converged(col, total, policy.tol):
            break
        n_ak *= 2
        if n_ak > policy.max_terms or n_ak > 64 * (span + 64):
            raise TruncationError("ergodic joint sum did not converge")
    pref = k * math.log1p(-q) - 0.5 * k * (k + 1) * lq + log_qpoch_inf(q, policy)
    pref += sum(log_qpoch_table(q, g)[g] for g in gaps)
    return LogProb(pref + total)


# ---- oracles ---------------------------------------------------------------

def oracle_mixture_pmf(p: MallowsParams, i: int, values, c_max: int | None = None,
                       policy: TruncationPolicy = DEFAULT_POLICY):
    """Jacobi-weighted mixture of ergodic laws for the values at positions i+1..i+k.

    Unsorted values are reduced to the sorted arrangement with a factor q per
    inversion.  Returns ``(LogProb, tail_bound)`` where ``tail_bound`` bounds
    the neglected mixture weight.
    """
    values = [int(v) for v in values]
    k = len(values)
    if len(set(values)) != k:
        raise ValueError("values must be distinct")
    if p.degenerate:
        return pmf_neighbors(p, i, values), 0.0
    ys = sorted(values)
    ds = [y - (i + j) for j, y in enumerate(ys, 1)]
    if c_max is None:
        cs, tail = mixture_range(p.q, p.alpha, policy)
        lo, hi = int(min(cs[0], ds[0] - 1)), int(max(cs[-1], ds[-1] + 1))
    else:
        lo, hi = -c_max, c_max
        tail = _mixture_tail_outside(p, c_max, policy)
        if tail > policy.tol:
            raise TruncationError(f"neglected mixture weight {tail:.3g} exceeds tol")

    def term(c):
        return float(mixture_weight(c, p.q, p.alpha, policy) + go_pmf_joint(p.q, c, ds, policy))

    terms = {c: term(c) for c in range(lo, hi + 1)}
    if c_max is None:
        # the absolute weight tail can dominate a very small probability, so keep
        # extending until the edge terms are negligible relative to the running sum
        for step in (1, -1):
            edge = hi if step == 1 else lo
            while True:
                total = float(np.logaddexp.reduce(list(terms.values())))
                last, prev = terms[edge], terms[edge - step]
                if last < prev - math.log(2) and last < total + math.log(policy.tol):
                    break
                edge += step
                terms[edge] = term(edge)
                if abs(edge) > policy.max_terms:
                    raise TruncationError("mixture oracle did not converge")
    out = float(np.logaddexp.reduce(list(terms.values()))) + inversions(values) * p.logq
    return LogProb(out), float(tail)


def _mixture_tail_outside(p: MallowsParams, c_max: int, policy) -> float:
    cs, tail = mixture_range(p.q, p.alpha, TruncationPolicy(policy.tol * 1e-3, policy.max_terms))
    w = np.exp([mixture_weight(int(c), p.q, p.alpha, policy) for c in cs])
    return float(w[np.abs(cs) > c_max].sum() + tail)


def oracle_marginalized_pmf(p: MallowsParams, pv, policy: TruncationPolicy = DEFAULT_POLICY,
                            max_span: int = 8):
    """Sum the consecutive-block joint law over the values at unassigned positions.

    The sum runs over values in increasing order, tracking which free
    positions are filled; the q^inv factor accrues one position at a time.
    Returns ``(LogProb, tail_bound)``; the bound covers free values that
    fall outside the summation window.
    """
    pv = _check_pairs(pv)
    lo, hi = pv[0][0], pv[-1][0]
    if hi - lo > max_span:
        raise ValueError(f"span {hi - lo} exceeds {max_span}")
    fixed = dict(pv)
    n = hi - lo + 1
    free = [s for s in range(lo, hi + 1) if s not in fixed]
    if not free:
        return pmf_neighbors(p, lo - 1, [fixed[s] for s in range(lo, hi + 1)]), 0.0
    if p.degenerate:
        return _point(all(x == s for s, x in fixed.items())), 0.0

    extra = n
    while True:
        R = p.radius(policy.tol, extra)
        vmin = min(min(fixed.values()), lo + p.center - R)
        vmax = max(max(fixed.values()), hi + p.center + R)
        tail = 0.0
        for s in free:
            below = cdf_product(p, [(s, vmin - 1)]).prob
            above = 1.0 - cdf_product(p, [(s, vmax)]).prob
            tail += below + above
        if tail < policy.tol:
            break
        extra *= 2
        if extra > policy.max_terms:
            raise TruncationError("marginalization window did not capture the mass")

    base = lo - 1
    nf = len(free)
    masks = np.arange(1 << nf)
    popcount = np.array([bin(m).count("1") for m in masks])
    # cnt_gt[f][mask]: free positions in mask that lie to the right of free[f]
    cnt_gt = np.array([[sum(1 for g in range(nf) if (m >> g) & 1 and free[g] > free[f]) for m in masks]
                       for f in range(nf)])
    fixed_items = sorted(fixed.items(), key=lambda kv: kv[1])
    qpow = np.exp(np.arange(n + 1) * p.logq)
    dp = np.zeros(1 << nf)
    dp[0] = 1.0
    fixed_done = []
    for y in range(vmin, vmax + 1):
        nfix = len(fixed_done)
        rank = popcount + nfix + 1
        fval = np.exp(_log_single_disp(p.logq, p.logalpha, y - base + rank - n - 1))
        if y in fixed.values():
            s = next(pos for pos, val in fixed_items if val == y)
            gt = np.array([sum(1 for g in range(nf) if (m >> g) & 1 and free[g] > s) for m in masks])
            gt += sum(1 for t in fixed_done if t > s)
            dp = dp * fval * qpow[gt]
            fixed_done.append(s)
            continue
        new = dp.copy()
        for f in range(nf):
            bit = 1 << f
            src = masks[(masks & bit) == 0]
            gt = cnt_gt[f][src] + sum(1 for t in fixed_done if t > free[f])
            new[src | bit] += dp[src] * fval[src] * qpow[gt]
        dp = new
    total = dp[-1]
    if len(fixed_done) != len(fixed):
        raise RuntimeError("fixed values fell outside the summation window")
    out = math.log(total) - 0.5 * n * (n - 1) * p.logq if total > 0 else NEG_INF
    return LogProb(out), float(tail)
