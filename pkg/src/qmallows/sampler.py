"""Sequential sampling of consecutive values of a Mallows product permutation.

The value at the next position is drawn from the ratio of two neighbor
block laws.  With m values y_1 < ... < y_m already placed at positions
i+1..i+m and a candidate z of rank r among them,

    w(z) = q^{m-r} f(z - i + r - m - 1) * prod_{j<=r} f(u_j - 1) / f(u_j),

where u_j = y_j - i + j - m - 1 and f is the single-site displacement law.
Candidates live on a finite grid; mass beyond the grid edges is bounded by
geometric tails and the grid widens until that bound drops below the
tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .measures import _log_single_disp, log_pmf_neighbors_batch
from .qseries import DEFAULT_POLICY, MallowsParams, TruncationError, TruncationPolicy
from .stats import EmpiricalDist

_CHUNK = 20_000


@dataclass(frozen=True)
class WindowAssignment:
    """Values ``values[m]`` at positions ``start + m``; ``tv_bound`` bounds the truncation error."""

    start: int
    values: tuple
    tv_bound: float = 0.0

    def __post_init__(self):
        if len(self.values) < 1:
            raise ValueError("empty window")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"values must be distinct: {self.values}")

    @property
    def k(self) -> int:
        return len(self.values)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for replica stream ``stream``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream),))))


def _edge_tail(logw_edge1, logw_edge2):
    # geometric bound from two consecutive weights moving away from the grid
    ratio = np.exp(logw_edge2 - logw_edge1)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(ratio < 1, np.exp(logw_edge1) / (1 - ratio), np.inf)
    return np.where(np.isneginf(logw_edge1), 0.0, bound)


def _row_ranks(Y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Number of entries of each sorted row of Y strictly below each z."""
    n, m = Y.shape
    lo = min(int(Y.min()), int(z.min()))
    span = max(int(Y.max()), int(z.max())) - lo + 1
    off = (np.arange(n) * span)[:, None]
    flat = np.searchsorted((Y - lo + off).ravel(), (z[None, :] - lo + off).ravel())
    return flat.reshape(n, len(z)) - np.arange(n)[:, None] * m


def _lookup(lq, la, d: np.ndarray) -> np.ndarray:
    # log f on integer arrays through a table over their range
    lo = int(d.min())
    table = _log_single_disp(lq, la, np.arange(lo, int(d.max()) + 1))
    return table[d - lo]


def _log_weights(p: MallowsParams, i: int, Y: np.ndarray, z: np.ndarray):
    """Unnormalized log conditional weights of candidates ``z`` given sorted rows ``Y``."""
    n, m = Y.shape
    lq, la = p.logq, p.logalpha
    if m:
        j = np.arange(1, m + 1)
        u = Y - i + j - m - 1
        fu = _lookup(lq, la, np.concatenate([u - 1, u], axis=1))
        step = fu[:, :m] - fu[:, m:]
        H = np.concatenate([np.zeros((n, 1)), np.cumsum(step, axis=1)], axis=1)
        r = _row_ranks(Y, z)
        used = np.take_along_axis(Y, np.minimum(r, m - 1), axis=1) == z[None, :]
        lw = (m - r) * lq + _lookup(lq, la, z[None, :] - i + r - m - 1)
        lw += np.take_along_axis(H, r, axis=1)
        lw[used] = -np.inf
        return lw
    lw = _log_single_disp(lq, la, z - i - 1)
    return np.broadcast_to(np.atleast_1d(lw), (n, len(z))).copy()


def conditional_law(p: MallowsParams, i0: int, prefix: np.ndarray,
                    policy: TruncationPolicy = DEFAULT_POLICY):
    """Truncated law of the next value given the rows of ``prefix``.

    ``prefix`` is an (n, m) array of values at positions i0..i0+m-1.
    Returns ``(grid, logp, tail)``: candidate values, row-normalized log
    probabilities of shape (n, len(grid)), and the largest relative mass
    left outside the grid.
    """
    prefix = np.atleast_2d(np.asarray(prefix, dtype=np.int64))
    n, m = prefix.shape
    Y = np.sort(prefix, axis=1)
    i = i0 - 1
    center = i0 + m + p.center
    R = p.radius(policy.tol, extra=m + 2)
    while True:
        lo, hi = center - R, center + R
        if m:
            lo = min(lo, int(Y[:, 0].min()) - 2)
            hi = max(hi, int(Y[:, -1].max()) + 2)
        if hi - lo > policy.max_terms:
            raise TruncationError("conditional support exceeds max_terms")
        z = np.arange(lo, hi + 1)
        outside = np.array([lo - 1, lo - 2, hi + 1, hi + 2])
        lw = _log_weights(p, i, Y, z)
        le = _log_weights(p, i, Y, outside)
        total = logsumexp(lw, axis=1)
        tail = (_edge_tail(le[:, 0], le[:, 1]) + _edge_tail(le[:, 2], le[:, 3])) / np.exp(total)
        worst = float(np.max(tail))
        if worst < policy.tol:
            return z, lw - total[:, None], worst
        R *= 2


def sample_windows(p: MallowsParams, i0: int, k: int, n: int, rng: np.random.Generator,
                   policy: TruncationPolicy = DEFAULT_POLICY):
    """Draw ``n`` independent windows; returns an (n, k) array and the TV bound ``k * tol``.

    Values at positions i0, i0+1, ... are drawn one coordinate at a time by
    inverse CDF with a single uniform per coordinate and replica.
    """
    if k < 1 or n < 0:
        raise ValueError("need k >= 1 and n >= 0")
    out = np.empty((n, k), dtype=np.int64)
    if p.degenerate:
        out[:] = i0 + np.arange(k)
        return out, 0.0
    u = rng.random((n, k))
    worst = 0.0
    for s in range(0, n, _CHUNK):
        rows = slice(s, min(n, s + _CHUNK))
        for m in range(k):
            z, logp, tail = conditional_law(p, i0, out[rows, :m], policy)
            worst = max(worst, tail)
            cdf = np.cumsum(np.exp(logp), axis=1)
            idx = np.sum(cdf < u[rows, m, None] * cdf[:, -1:], axis=1)
            out[rows, m] = z[np.minimum(idx, len(z) - 1)]
    return out, k * policy.tol


def sample_window(p: MallowsParams, i0: int, k: int, rng: np.random.Generator,
                  policy: TruncationPolicy = DEFAULT_POLICY) -> WindowAssignment:
    """One window of k consecutive values starting at position ``i0``."""
    vals, bound = sample_windows(p, i0, k, 1, rng, policy)
    return WindowAssignment(i0, tuple(int(v) for v in vals[0]), bound)


def exhaustive_law(p: MallowsParams, i0: int, k: int,
                   policy: TruncationPolicy = DEFAULT_POLICY):
    """Exact law of the sampler's output, obtained by expanding every branch.

    Returns ``(X, probs)``: an (n, k) array of value tuples and their
    probabilities.  The branch count grows like the cube of the grid width
    for k = 3, so keep q moderate there.
    """
    if k < 1:
        raise ValueError("k must be positive")
    prefixes = np.zeros((1, 0), dtype=np.int64)
    logw = np.zeros(1)
    for _ in range(k):
        z, logp, _ = conditional_law(p, i0, prefixes, policy)
        rows, cols = np.nonzero(np.isfinite(logp))
        prefixes = np.concatenate([prefixes[rows], z[cols][:, None]], axis=1)
        logw = logw[rows] + logp[rows, cols]
    return prefixes, np.exp(logw)


def exhaustive_tv(p: MallowsParams, i0: int, k: int,
                  policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """TV distance between the sampler's exact law and the closed-form joint law."""
    X, s = exhaustive_law(p, i0, k, policy)
    t = np.exp(log_pmf_neighbors_batch(p, i0 - 1, X))
    missing = max(0.0, 1.0 - float(np.sum(t)))
    return 0.5 * (float(np.sum(np.abs(s - t))) + missing)


def empirical_distribution(samples, projection=None) -> EmpiricalDist:
    """Histogram of windows projected onto coordinate indices ``projection`` (all by default).

    ``samples`` is a list of WindowAssignment or an (n, k) array.
    """
    if len(samples) and isinstance(samples[0], WindowAssignment):
        starts = {w.start for w in samples}
        ks = {w.k for w in samples}
        if len(starts) > 1 or len(ks) > 1:
            raise ValueError("windows differ in start or length")
        arr = np.array([w.values for w in samples], dtype=np.int64)
    else:
        arr = np.atleast_2d(np.asarray(samples, dtype=np.int64))
    if projection is not None:
        arr = arr[:, list(projection)]
    if arr.shape[1] == 1:
        return EmpiricalDist.from_samples(arr[:, 0])
    return EmpiricalDist.from_samples(arr)
