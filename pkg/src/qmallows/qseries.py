"""q-series primitives: Pochhammer symbols, infinite products, Jacobi mixture weights.

Everything is evaluated in the log domain.  Infinite products are truncated
under an explicit :class:`TruncationPolicy`; the bound on the neglected tail
is computed, not guessed, and exceeding ``max_terms`` raises.
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np


class TruncationError(RuntimeError):
    """A series or product could not be truncated within the requested tolerance."""


@dataclass(frozen=True)
class TruncationPolicy:
    tol: float = 1e-14
    max_terms: int = 10**6

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0):
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_terms < 1:
            raise ValueError("max_terms must be positive")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class MallowsParams:
    """Parameters (q, alpha) of the Mallows product measure.

    ``q`` lies in [0, 1) and ``alpha`` is positive.  ``q = 0`` is the
    degenerate identity limit and is short-circuited by every routine.
    """

    q: float
    alpha: float = 1.0
    logq: float = field(init=False, repr=False)
    logalpha: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (0.0 <= self.q < 1.0) or not math.isfinite(self.q):
            raise ValueError(f"q must lie in [0, 1), got {self.q}")
        if not (self.alpha > 0.0) or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        object.__setattr__(self, "logq", math.log(self.q) if self.q > 0 else -math.inf)
        object.__setattr__(self, "logalpha", math.log(self.alpha))

    @property
    def degenerate(self) -> bool:
        return self.q == 0.0

    def inverted(self) -> "MallowsParams":
        """Parameters of the law of the inverse permutation (alpha -> 1/alpha)."""
        return MallowsParams(self.q, 1.0 / self.alpha)

    @property
    def center(self) -> int:
        """Integer displacement around which the single-site law concentrates."""
        if self.degenerate:
            return 0
        return int(round(0.5 - self.logalpha / self.logq))

    def radius(self, tol: float, extra: int = 0) -> int:
        """Half-width of a window beyond which single-site tails are below ``tol``."""
        if self.degenerate:
            return extra
        return int(math.ceil(math.log(tol) / self.logq)) + 2 + extra


class LogProb(float):
    """A natural-log probability with a linear-domain accessor."""

    @property
    def prob(self) -> float:
        return math.exp(self)


def log1pexp(t):
    """log(1 + e^t), stable for both signs of t."""
    return np.logaddexp(0.0, t)


def log_qpoch(q: float, n: int) -> float:
    """log of the finite q-Pochhammer (q;q)_n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    total = 0.0
    qk = 1.0
    for _ in range(n):
        qk *= q
        total += math.log1p(-qk)
    return total


def finite_qpoch(q: float, n: int) -> float:
    """(q;q)_n = prod_{k=1}^n (1 - q^k)."""
    return math.exp(log_qpoch(q, n))


def log_qpoch_table(q: float, n: int) -> np.ndarray:
    """Array of log (q;q)_m for m = 0..n."""
    if n < 0:
        return np.zeros(0)
    ks = np.arange(1, n + 1)
    out = np.zeros(n + 1)
    out[1:] = np.cumsum(np.log1p(-(q ** ks)))
    return out


@lru_cache(maxsize=256)
def log_qpoch_inf(q: float, policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """log (q;q)_infinity, truncated once the neglected tail is below ``policy.tol``."""
    if q == 0.0:
        return 0.0
    total = 0.0
    qk = 1.0
    for k in range(1, policy.max_terms + 1):
        qk *= q
        total += math.log1p(-qk)
        # |sum_{j>k} log(1-q^j)| <= q^{k+1} / ((1-q)(1-q^{k+1}))
        nxt = qk * q
        if nxt / ((1.0 - q) * (1.0 - nxt)) < policy.tol:
            return total
    raise TruncationError(f"(q;q)_inf not converged in {policy.max_terms} terms at q={q}")


def log_tail_product(alpha: float, q: float, offset: float,
                     policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """log prod_{k>=0} (1 + alpha q^{k + offset}).

    ``offset`` may be negative; the early factors are then large but the
    logarithm stays finite.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if q == 0.0:
        return math.log1p(alpha) if offset == 0 else 0.0
    la, lq = math.log(alpha), math.log(q)
    total = 0.0
    for k in range(policy.max_terms):
        t = la + (k + offset) * lq
        total += float(log1pexp(t))
        # remaining terms: sum_{j>k} log(1 + alpha q^{j+offset}) <= alpha q^{k+1+offset} / (1-q)
        bound = t + lq - math.log1p(-q)
        if bound < math.log(policy.tol):
            return total
    raise TruncationError(f"tail product not converged in {policy.max_terms} terms")


def tail_product(alpha: float, q: float, offset: float,
                 policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    return math.exp(log_tail_product(alpha, q, offset, policy))


@lru_cache(maxsize=256)
def log_jacobi_norm(q: float, alpha: float, policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """log of (q;q)_inf prod(1 + alpha q^{k+1/2}) prod(1 + q^{k+1/2}/alpha)."""
    return (log_qpoch_inf(q, policy)
            + log_tail_product(alpha, q, 0.5, policy)
            + log_tail_product(1.0 / alpha, q, 0.5, policy))


def mixture_weight(c: int, q: float, alpha: float,
                   policy: TruncationPolicy = DEFAULT_POLICY) -> LogProb:
    """log of the Jacobi weight alpha^c q^{c^2/2} / normalizer of the balance-c component."""
    if q == 0.0:
        return LogProb(0.0 if c == 0 else -math.inf)
    lq = math.log(q)
    return LogProb(c * math.log(alpha) + 0.5 * c * c * lq - log_jacobi_norm(q, alpha, policy))


def mixture_weights(q: float, alpha: float, policy: TruncationPolicy = DEFAULT_POLICY):
    """Balances ``c`` and linear weights covering all but ``policy.tol`` of the mass.

    Returns ``(cs, weights, tail_bound)``.
    """
    if q == 0.0:
        return np.array([0]), np.array([1.0]), 0.0
    cs, tail = mixture_range(q, alpha, policy)
    lw = cs * math.log(alpha) + 0.5 * cs.astype(float) ** 2 * math.log(q) - log_jacobi_norm(q, alpha, policy)
    return cs, np.exp(lw), tail


def mixture_range(q: float, alpha: float, policy: TruncationPolicy = DEFAULT_POLICY):
    """Smallest symmetric-about-the-peak range of balances with neglected weight below tol."""
    la, lq = math.log(alpha), math.log(q)
    lz = log_jacobi_norm(q, alpha, policy)
    peak = int(round(-la / lq))

    def lw(c):
        return c * la + 0.5 * c * c * lq - lz

    hi = peak
    while True:
        # w_{c+1}/w_c = alpha q^{c+1/2}; geometric bound once the ratio is below one
        r = math.exp(la + (hi + 0.5) * lq)
        if r < 1 and math.exp(lw(hi + 1)) / (1 - r) < policy.tol / 2:
            break
        hi += 1
        if hi - peak > policy.max_terms:
            raise TruncationError("mixture range did not converge")
    lo = peak
    while True:
        r = math.exp(-la + (-lo + 0.5) * lq)
        if r < 1 and math.exp(lw(lo - 1)) / (1 - r) < policy.tol / 2:
            break
        lo -= 1
        if peak - lo > policy.max_terms:
            raise TruncationError("mixture range did not converge")
    ub = math.exp(lw(hi + 1)) / (1 - math.exp(la + (hi + 0.5) * lq))
    lb = math.exp(lw(lo - 1)) / (1 - math.exp(-la + (-lo + 0.5) * lq))
    return np.arange(lo, hi + 1), ub + lb


def log_qbinomial(q: float, n: int, k: int) -> float:
    if k < 0 or k > n:
        return -math.inf
    return log_qpoch(q, n) - log_qpoch(q, k) - log_qpoch(q, n - k)


# ---- identities ---------------------------------------------------------

def _rel(lhs: float, rhs: float, scale: float) -> float:
    # relative to the larger of |rhs| and the absolute size of the summed terms,
    # so that exact zeros reached through cancellation are scored sensibly
    return abs(lhs - rhs) / max(abs(rhs), scale, np.finfo(float).tiny)


def _euler(inputs, policy):
    q, z = float(inputs["q"]), float(inputs["z"])
    lhs, scale, n = 0.0, 0.0, 0
    while True:
        term = q ** (n * (n - 1) / 2) * z ** n / finite_qpoch(q, n)
        lhs += term
        scale += abs(term)
        if n > 2 and abs(term) < policy.tol * scale and abs(z) * q ** n < 0.5:
            break
        n += 1
        if n > policy.max_terms:
            raise TruncationError("Euler series did not converge")
    rhs = 1.0
    k = 0
    while True:
        f = q ** k * z
        rhs *= 1 + f
        if abs(f) / (1 - q) < policy.tol:
            break
        k += 1
    return _rel(lhs, rhs, scale)


def _qbinomial(inputs, policy):
    q, n, x = float(inputs["q"]), int(inputs["n"]), float(inputs["x"])
    terms = [math.exp(log_qbinomial(q, n, k)) * q ** (k * (k - 1) / 2) * x ** k for k in range(n + 1)]
    rhs = 1.0
    for m in range(n):
        rhs *= 1 + q ** m * x
    return _rel(sum(terms), rhs, sum(abs(t) for t in terms))


def _jacobi(inputs, policy):
    q, alpha = float(inputs["q"]), float(inputs["alpha"])
    _, w, tail = mixture_weights(q, alpha, policy)
    return abs(math.fsum(w) - 1.0)


def _single_site(inputs, policy):
    # Jacobi-triple-product route to the single-site law, evaluated in logs
    from .measures import _log_single_disp

    q, alpha, x = float(inputs["q"]), float(inputs["alpha"]), int(inputs["x"])
    ia = 1.0 / alpha
    lhs = (math.log1p(-q) + x * math.log(alpha) + 0.5 * x * x * math.log(q)
           + log_tail_product(ia, q, -x + 1.5, policy)
           + log_tail_product(alpha, q, x + 1.5, policy)
           - log_tail_product(alpha, q, 0.5, policy)
           - log_tail_product(ia, q, 0.5, policy))
    rhs = _log_single_disp(math.log(q), math.log(alpha), x)
    return abs(math.expm1(lhs - rhs))


def _neighbor_block(inputs, policy):
    # the same route for k consecutive sites with weakly increasing displacements
    from .measures import _log_neighbors_sorted_disp

    q, alpha = float(inputs["q"]), float(inputs["alpha"])
    xs = [int(v) for v in inputs["x"]]
    if any(b < a for a, b in zip(xs, xs[1:])):
        raise ValueError("displacements must be weakly increasing")
    k = len(xs)
    lq, la, ia = math.log(q), math.log(alpha), 1.0 / alpha
    x1, xk = xs[0], xs[-1]
    lhs = k * math.log1p(-q) + x1 * la + (0.5 * x1 * x1 + sum(xs[1:]) - (k - 1) * x1) * lq
    for i in range(1, k):
        for j in range(xs[i] - xs[i - 1]):
            lhs += float(log1pexp(la + (j + xs[i - 1] + 0.5 + 2 * i - k) * lq))
    lhs += (log_tail_product(alpha, q, xk + 0.5 + k, policy)
            + log_tail_product(ia, q, -x1 + 0.5 + k, policy)
            - log_tail_product(alpha, q, 0.5, policy)
            - log_tail_product(ia, q, 0.5, policy))
    rhs = _log_neighbors_sorted_disp(lq, la, xs)
    return abs(math.expm1(lhs - rhs))


def _alternating(inputs, policy):
    q, alpha = float(inputs["q"]), float(inputs["alpha"])
    x1, i, b, k = (int(inputs[key]) for key in ("x1", "i", "b", "k"))
    if not (0 < b < k):
        raise ValueError("need 0 < b < k")
    n = k - b
    total, scale = 0.0, 0.0
    for ell in range(n + 1):
        f = sum(k - j + i + 1.5 for j in range(b + 1, b + ell + 1)) + (n - ell) * (n - ell + i + 0.5)
        prod = 1.0
        for j in range(b + ell + 1, k + 1):
            prod *= 1 + alpha * q ** (x1 + j - i - k - 0.5)
        term = (-1) ** ell * alpha ** (-n) * q ** f * math.exp(log_qbinomial(q, n, ell)) * prod
        total += term
        scale += abs(term)
    rhs = q ** (n * x1 + n * (n + 1) / 2)
    return _rel(total, rhs, scale)


IDENTITIES = {
    "euler": _euler,
    "qbinomial": _qbinomial,
    "jacobi": _jacobi,
    "single_site": _single_site,
    "neighbors": _neighbor_block,
    "alternating": _alternating,
}


def verify_identity(name: str, inputs: dict, policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """Evaluate both sides of a named q-series identity and return their relative error.

    Names and inputs:

    ``euler`` (q, z)
        sum_n q^{n(n-1)/2} z^n / (q;q)_n = prod_n (1 + q^n z)
    ``qbinomial`` (q, n, x)
        finite q-binomial theorem
    ``jacobi`` (q, alpha)
        the mixture weights sum to one
    ``single_site`` (q, alpha, x)
        triple-product route to the single-site law
    ``neighbors`` (q, alpha, x: weakly increasing list)
        the same route for a block of consecutive displacements
    ``alternating`` (q, alpha, x1, i, b, k)
        the alternating q-binomial sum used to collapse separated positions
    """
    if name not in IDENTITIES:
        raise KeyError(f"unknown identity {name!r}; choose from {sorted(IDENTITIES)}")
    q = float(inputs["q"])
    if not (0.0 < q < 1.0):
        raise ValueError("identities are checked for 0 < q < 1")
    return float(IDENTITIES[name](inputs, policy))
