"""Comparing exact, oracle and empirical laws: total variation, chi-square, rate intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import stats as sps


@dataclass
class EmpiricalDist:
    """Histogram over hashable outcomes.

    ``counts`` are usually integers; time-averaged histograms store
    occupation times instead, in which case ``n`` is the total time.
    """

    support: list
    counts: np.ndarray
    n: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if len(self.support) != len(self.counts):
            raise ValueError("support and counts differ in length")
        if np.any(self.counts < 0):
            raise ValueError("negative count")
        if not math.isclose(float(self.counts.sum()), float(self.n), rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError("counts do not sum to n")

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalDist":
        """Histogram of a sequence of outcomes, or of the rows of a 2-d array."""
        arr = np.asarray(samples)
        if arr.ndim == 1:
            vals, counts = np.unique(arr, return_counts=True)
            support = [v.item() for v in vals]
        else:
            vals, counts = np.unique(arr, axis=0, return_counts=True)
            support = [tuple(int(t) for t in row) for row in vals]
        return cls(support, counts, int(counts.sum()))

    @classmethod
    def from_weights(cls, weights: Mapping) -> "EmpiricalDist":
        keys = sorted(weights)
        counts = np.array([weights[k] for k in keys], dtype=float)
        return cls(keys, counts, float(counts.sum()))

    def freqs(self) -> dict:
        return {s: c / self.n for s, c in zip(self.support, self.counts)}

    def merge(self, other: "EmpiricalDist") -> "EmpiricalDist":
        acc = dict(zip(self.support, self.counts))
        for s, c in zip(other.support, other.counts):
            acc[s] = acc.get(s, 0) + c
        keys = sorted(acc)
        return EmpiricalDist(keys, np.array([acc[k] for k in keys]), self.n + other.n)


def _as_prob_dict(a) -> dict:
    if isinstance(a, EmpiricalDist):
        return a.freqs()
    return dict(a)


def tv_distance(a, b) -> float:
    """Half the L1 distance; outcomes missing from one side count as zero mass there."""
    pa, pb = _as_prob_dict(a), _as_prob_dict(b)
    keys = set(pa) | set(pb)
    return 0.5 * math.fsum(abs(pa.get(k, 0.0) - pb.get(k, 0.0)) for k in keys)


def chi_square_gof(e: EmpiricalDist, p: Mapping, min_bin: int = 5):
    """Pearson goodness-of-fit of counts ``e`` against probabilities ``p``.

    Outcomes are visited in sorted order and adjacent bins are pooled until
    each expected count reaches ``min_bin``.  Mass outside ``p`` (and any
    observed outcome that ``p`` does not list) forms one extra bin.
    Returns ``(statistic, dof, p_value)``.
    """
    obs = dict(zip(e.support, e.counts))
    keys = sorted(p)
    expected = np.array([e.n * p[k] for k in keys], dtype=float)
    observed = np.array([obs.get(k, 0) for k in keys], dtype=float)
    rest_exp = e.n - expected.sum()
    rest_obs = e.n - observed.sum()

    pooled_o, pooled_e = [], []
    acc_o = acc_e = 0.0
    for o, x in zip(observed, expected):
        acc_o += o
        acc_e += x
        if acc_e >= min_bin:
            pooled_o.append(acc_o)
            pooled_e.append(acc_e)
            acc_o = acc_e = 0.0
    if pooled_e:
        pooled_o[-1] += acc_o
        pooled_e[-1] += acc_e
    if rest_exp >= min_bin:
        pooled_o.append(rest_obs)
        pooled_e.append(rest_exp)
    elif pooled_e:
        pooled_o[-1] += rest_obs
        pooled_e[-1] += max(rest_exp, 0.0)
    if len(pooled_e) < 2:
        raise ValueError("fewer than two bins after pooling")
    o, x = np.array(pooled_o), np.array(pooled_e)
    stat = float(np.sum((o - x) ** 2 / x))
    dof = len(x) - 1
    return stat, dof, float(sps.chi2.sf(stat, dof))


def rate_ci(jumps: int, occupation: float, level: float = 0.95):
    """Rate estimate jumps/occupation with a normal-approximation interval.

    With no jumps the interval is one-sided: [0, -log(1 - level)/occupation],
    which is about 3/occupation at the 95% level.
    """
    if occupation <= 0:
        raise ValueError("occupation time must be positive")
    if jumps == 0:
        return 0.0, 0.0, -math.log1p(-level) / occupation
    rate = jumps / occupation
    z = float(sps.norm.ppf(0.5 + level / 2))
    half = z / math.sqrt(jumps)
    return rate, max(0.0, rate * (1 - half)), rate * (1 + half)
