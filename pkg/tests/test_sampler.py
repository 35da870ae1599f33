import numpy as np
import pytest

from qmallows import measures
from qmallows.qseries import MallowsParams, TruncationPolicy
from qmallows.sampler import (
    WindowAssignment, empirical_distribution, exhaustive_law, exhaustive_tv, make_rng,
    sample_window, sample_windows,
)
from qmallows.stats import chi_square_gof, tv_distance

P = MallowsParams(0.5, 1.0)


def test_degenerate_returns_identity():
    X, bound = sample_windows(MallowsParams(0.0), 3, 4, 5, make_rng(0))
    assert (X == np.arange(3, 7)).all()
    assert bound == 0.0


def test_window_assignment_validation():
    with pytest.raises(ValueError):
        WindowAssignment(0, (1, 1))
    w = sample_window(P, -2, 3, make_rng(1))
    assert w.k == 3 and w.start == -2 and w.tv_bound > 0


def test_determinism_and_streams():
    a, _ = sample_windows(P, 0, 4, 100, make_rng(5, 2))
    b, _ = sample_windows(P, 0, 4, 100, make_rng(5, 2))
    c, _ = sample_windows(P, 0, 4, 100, make_rng(5, 3))
    assert (a == b).all()
    assert not (a == c).all()


def test_rows_are_distinct_values():
    X, _ = sample_windows(MallowsParams(0.8, 2.0), 0, 10, 2000, make_rng(2))
    assert all(len(set(r)) == 10 for r in X)


@pytest.mark.parametrize("q,alpha,k", [(0.3, 0.25, 3), (0.5, 1.0, 3), (0.7, 4.0, 2), (0.9, 1.0, 2)])
def test_exhaustive_law_matches_joint(q, alpha, k):
    tol = 1e-9
    tv = exhaustive_tv(MallowsParams(q, alpha), 1, k, TruncationPolicy(tol=tol))
    assert tv <= 3 * tol


def test_exhaustive_law_is_normalized_within_tolerance():
    X, probs = exhaustive_law(P, 0, 2, TruncationPolicy(tol=1e-10))
    assert abs(probs.sum() - 1) < 1e-9
    assert X.shape[1] == 2


def test_single_coordinate_gof():
    X, _ = sample_windows(P, 0, 1, 100_000, make_rng(11))
    law = {x: measures.pmf_single(P, 0, x).prob for x in range(-60, 61)}
    _, _, pval = chi_square_gof(empirical_distribution(X), law)
    assert pval > 1e-3
    assert tv_distance(empirical_distribution(X), law) <= 0.01


def test_exchange_ratio():
    # frequency of the decreasing arrangement over the increasing one is q
    X, _ = sample_windows(P, 0, 2, 100_000, make_rng(12))
    up = np.sum((X[:, 0] == 0) & (X[:, 1] == 1))
    down = np.sum((X[:, 0] == 1) & (X[:, 1] == 0))
    ratio = down / up
    se = ratio * np.sqrt(1 / up + 1 / down)
    assert abs(ratio - P.q) < 3 * se


def test_empirical_distribution_projection():
    ws = [WindowAssignment(0, (3, 1, 2)), WindowAssignment(0, (3, 0, 1))]
    e = empirical_distribution(ws, [0])
    assert e.freqs() == {3: 1.0}
    one = empirical_distribution([WindowAssignment(0, (5,))])
    assert one.freqs() == {5: 1.0}
    with pytest.raises(ValueError):
        empirical_distribution([WindowAssignment(0, (1,)), WindowAssignment(1, (1,))])
