import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmallows import measures as m
from qmallows.qseries import MallowsParams

P = MallowsParams(0.5, 1.0)
params = st.builds(MallowsParams, st.sampled_from([0.2, 0.5, 0.8]), st.sampled_from([0.4, 1.0, 2.5]))


def test_single_site_inversion_and_normalization():
    a = m.pmf_single(MallowsParams(0.5, 2.0), 0, 3)
    b = m.pmf_single(MallowsParams(0.5, 0.5), 0, -3)
    assert float(a) == pytest.approx(float(b), abs=1e-15)
    # the mass beyond radius 40 is about 1.3e-12 at q = 0.5, so add the exact tails
    body = math.fsum(m.pmf_single(P, 0, x).prob for x in range(-40, 41))
    tails = m.cdf_product(P, [(0, -41)]).prob + 1 - m.cdf_product(P, [(0, 40)]).prob
    assert 0 < 1 - body < 2e-12
    assert body + tails == pytest.approx(1, abs=1e-14)
    assert float(m.pmf_single(MallowsParams(0.5, 0.7), 2, 5)) == pytest.approx(
        float(m.pmf_single(MallowsParams(0.5, 1 / 0.7), 5, 2)), abs=1e-14)


def test_single_site_degenerate():
    p0 = MallowsParams(0.0)
    assert m.pmf_single(p0, 3, 3).prob == 1.0
    assert m.pmf_single(p0, 3, 4).prob == 0.0


@settings(max_examples=60, deadline=None)
@given(params, st.lists(st.integers(-6, 6), min_size=1, max_size=4, unique=True), st.integers(-5, 5))
def test_neighbors_translation_invariance(p, vals, s):
    a = m.pmf_neighbors(p, 0, vals)
    b = m.pmf_neighbors(p, s, [v + s for v in vals])
    assert float(a) == pytest.approx(float(b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(params, st.integers(-5, 5), st.integers(-5, 5), st.integers(-3, 3))
def test_neighbors_q_exchangeability(p, x1, x2, i):
    if x1 == x2:
        return
    lo, hi = min(x1, x2), max(x1, x2)
    up = m.pmf_neighbors(p, i, [lo, hi])
    down = m.pmf_neighbors(p, i, [hi, lo])
    assert float(down) - float(up) == pytest.approx(p.logq, abs=1e-12)


def test_neighbors_reductions():
    for q, a in itertools.product([0.3, 0.7], [0.5, 2.0]):
        p = MallowsParams(q, a)
        for i, x in itertools.product(range(-2, 3), range(-4, 5)):
            assert float(m.pmf_neighbors(p, i, [x])) == pytest.approx(float(m.pmf_single(p, i + 1, x)), abs=1e-13)
        prod = sum(float(m.pmf_single(p, 1 + j, x)) for j, x in enumerate([5, 1, 0]))
        assert float(m.pmf_neighbors(p, 0, [5, 1, 0])) == pytest.approx(prod, abs=1e-13)


def test_neighbors_batch_matches_scalar():
    p = MallowsParams(0.6, 1.8)
    X = np.array([[0, 1, 2], [3, -1, 0], [2, 2, 1], [-4, 5, 0]])
    got = m.log_pmf_neighbors_batch(p, -1, X)
    for row, g in zip(X, got):
        if len(set(row)) < 3:
            assert g == -np.inf
        else:
            assert g == pytest.approx(float(m.pmf_neighbors(p, -1, list(row))), abs=1e-12)


def test_decreasing_examples():
    assert float(m.pmf_decreasing(P, [(3, 2)])) == float(m.pmf_single(P, 3, 2))
    ref = m.oracle_marginalized_pmf(P, [(0, 4), (2, 1)])[0]
    assert m.pmf_decreasing(P, [(0, 4), (2, 1)]).prob == pytest.approx(ref.prob, abs=1e-9)
    assert float(m.pmf_decreasing(P, [(1, 3), (2, 0), (3, -2)])) == pytest.approx(
        float(m.pmf_neighbors(P, 0, [3, 0, -2])), abs=1e-13)
    with pytest.raises(ValueError):
        m.pmf_decreasing(P, [(0, 1), (1, 2)])


def test_decreasing_depends_on_displacements_only():
    # displacements (5, -1, -5) at two different position sets
    p = MallowsParams(0.4, 1.7)
    a = m.pmf_decreasing(p, [(0, 5), (3, 2), (4, -1)])
    b = m.pmf_decreasing(p, [(-2, 3), (1, 0), (2, -3)])
    assert float(a) == pytest.approx(float(b), abs=1e-13)


def test_cdf_product_examples():
    p = MallowsParams(0.5, 1.3)
    for i, x in [(0, 0), (2, 1), (-1, 3)]:
        direct = math.fsum(m.pmf_single(p, i, y).prob for y in range(x - 80, x + 1))
        assert m.cdf_product(p, [(i, x)]).prob == pytest.approx(direct, abs=1e-12)
    pos = [0, 2, 3]
    block = math.fsum(float(m.blocking_prob(p, i)[1]) for i in pos)
    assert float(m.cdf_product(p, [(i, 0) for i in pos])) == pytest.approx(block, abs=1e-13)
    assert m.cdf_product(P, [(0, 10**4)]).prob == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        m.cdf_product(P, [(0, 0), (1, 1)])


def test_two_separated_examples():
    assert float(m.pmf_two_separated(P, 0, 3, 2, 0)) == float(m.pmf_decreasing(P, [(1, 2), (3, 0)]))
    direct = math.fsum(m.pmf_neighbors(P, 0, [2, x2, 0]).prob for x2 in range(-80, 81) if x2 not in (0, 2))
    assert m.pmf_two_separated(P, 0, 3, 2, 0).prob == pytest.approx(direct, abs=1e-9)
    p = MallowsParams(0.3, 2.0)
    assert float(m.pmf_two_separated(p, -1, 2, 1, 0)) == pytest.approx(float(m.pmf_neighbors(p, -1, [1, 0])), abs=1e-14)


def test_gap_one_examples():
    direct = math.fsum(m.pmf_neighbors(P, -1, [0, x2, 2]).prob for x2 in range(-80, 81) if x2 not in (0, 2))
    assert m.pmf_gap_one_increasing(P, 0, 2).prob == pytest.approx(direct, abs=1e-9)
    assert m.pmf_gap_one_increasing(MallowsParams(0.0), 0, 2).prob == 1.0
    ref = m.oracle_marginalized_pmf(P, [(0, 0), (2, 2)])[0]
    assert m.pmf_gap_one_increasing(P, 0, 2).prob == pytest.approx(ref.prob, abs=1e-9)


def test_two_point_law_at_distance_two_is_normalized():
    p = MallowsParams(0.5, 1.4)
    R = 30
    total = 0.0
    for x1 in range(-R, R + 1):
        for x3 in range(-R, R + 1):
            if x1 < x3:
                total += m.pmf_gap_one_increasing(p, x1, x3).prob
            elif x1 > x3:
                total += m.pmf_decreasing(p, [(0, x1), (2, x3)]).prob
    assert total == pytest.approx(1.0, abs=1e-8)


def test_blocking_prob():
    p = MallowsParams(0.5, 1.5)
    occ, hole = m.blocking_prob(p, 2)
    assert occ.prob + hole.prob == pytest.approx(1.0, abs=1e-15)
    assert hole.prob == pytest.approx(math.fsum(m.pmf_single(p, 2, x).prob for x in range(-80, 1)), abs=1e-12)
    occs = [m.blocking_prob(p, i)[0].prob for i in range(-30, 31)]
    assert all(a <= b for a, b in zip(occs, occs[1:]))
    assert occs[0] < 1e-8 and occs[-1] > 1 - 1e-8


def test_ergodic_law():
    total = math.fsum(m.go_pmf_displacement(0.5, 0, d).prob for d in range(-40, 41))
    assert total == pytest.approx(1.0, abs=1e-10)
    assert float(m.go_pmf_displacement(0.5, 2, 5)) == float(m.go_pmf_displacement(0.5, 0, 3))
    for d in range(-3, 4):
        assert float(m.go_pmf_joint(0.5, 1, [d])) == pytest.approx(float(m.go_pmf_displacement(0.5, 1, d)), abs=1e-13)


def test_ergodic_joint_marginalizes():
    q, c, d1 = 0.5, 0, 1
    total = 0.0
    for d2 in range(d1, d1 + 41):
        total += m.go_pmf_joint(q, c, [d1, d2]).prob
    # configurations with the second displacement below the first, reached by one swap
    for d2 in range(d1 - 40, d1 - 1):
        total += q * m.go_pmf_joint(q, c, [d2 + 1, d1 - 1]).prob
    assert total == pytest.approx(m.go_pmf_displacement(q, c, d1).prob, abs=1e-8)


def test_oracles_agree_with_closed_forms():
    p = MallowsParams(0.5, 1.3)
    lp, tail = m.oracle_mixture_pmf(p, 0, [2])
    assert lp.prob == pytest.approx(m.pmf_single(p, 1, 2).prob, rel=1e-10)
    assert tail < 1e-12
    lp, _ = m.oracle_mixture_pmf(P, 0, [0, 1])
    assert lp.prob == pytest.approx(m.pmf_neighbors(P, 0, [0, 1]).prob, rel=1e-9)
    lp, _ = m.oracle_marginalized_pmf(P, [(1, 3), (2, -1)])
    assert float(lp) == pytest.approx(float(m.pmf_neighbors(P, 0, [3, -1])), abs=1e-13)


def _dsecond_oracle(p, xs):
    return math.fsum(m.oracle_marginalized_pmf(p, list(zip(xs, s)))[0].prob
                     for s in itertools.permutations(range(1, len(xs) + 1)))


def test_dsecond_examples():
    p = MallowsParams(0.5, 1.7)
    for x in range(-4, 5):
        assert float(m.pmf_dsecond(p, [x])) == pytest.approx(float(m.pmf_single(p, x, 1)), abs=1e-13)
    R = 30
    tot = math.fsum(m.pmf_dsecond(P, (a, b)).prob for a in range(-R, R + 1) for b in range(a + 1, R + 2))
    assert tot == pytest.approx(1.0, abs=1e-8)
    ref = _dsecond_oracle(p, (0, 1))
    assert m.pmf_dsecond(p, (0, 1), "inverse").prob == pytest.approx(ref, abs=1e-8)
    assert abs(m.pmf_dsecond(p, (0, 1), "direct").prob - ref) > 1e-3


def test_multiclass():
    p = MallowsParams(0.5, 1.7)
    for x in range(-3, 4):
        assert float(m.pmf_multiclass(p, [x])) == pytest.approx(float(m.pmf_dsecond(p, [x])), abs=1e-13)
    # class 3 is the value 2 and class 2 the value 1
    for xs in ([1, 0], [0, 1], [2, -1]):
        ref = m.oracle_marginalized_pmf(p, sorted(zip(xs, [2, 1])))[0].prob
        assert m.pmf_multiclass(p, xs).prob == pytest.approx(ref, abs=1e-9)
    a = m.pmf_multiclass(p, [0, 1])
    b = m.pmf_multiclass(p, [1, 0])
    assert float(a) - float(b) == pytest.approx(p.logq, abs=1e-13)


@pytest.mark.parametrize("alpha", [0.4, 1.0, 3.0])
def test_second_class_detailed_balance(alpha):
    p = MallowsParams(0.5, alpha)
    for x in range(-10, 11):
        lhs = float(m.second_class_position_pmf(p, x)) + math.log(m.second_class_rate(p, x, 1))
        rhs = float(m.second_class_position_pmf(p, x + 1)) + math.log(m.second_class_rate(p, x + 1, -1))
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_second_class_rate_references_agree_at_alpha_one():
    for x in range(-4, 5):
        for d in (1, -1):
            assert m.second_class_rate(P, x, d) == pytest.approx(m.second_class_rate(P, x, d, "displacement"), rel=1e-13)


def test_asepqm_law():
    for q, a in [(0.5, 1.0), (0.3, 2.0)]:
        p = MallowsParams(q, a)
        for x in range(-5, 6):
            assert m.pmf_asepqm(p, 1, x).prob == pytest.approx(m.pmf_single(p, 0, x + 1).prob, abs=1e-15)
    assert math.fsum(m.pmf_asepqm(P, 2, x).prob for x in range(-40, 41)) == pytest.approx(1, abs=1e-10)
    two = m.pmf_single(P, 0, 1).prob + m.pmf_single(P, 0, 2).prob
    assert m.pmf_asepqm(P, 2, 0).prob == pytest.approx(two, abs=1e-13)
    assert m.pmf_asepqm(MallowsParams(0.0), 3, -1).prob == 1.0


def test_asymptotic_examples():
    t = m.asymptotic_check(1e-3, 1.0, [0.0, 0.5])
    assert t["logistic"][0] == pytest.approx(0.25)
    assert abs(t["scaled_pmf"][1] - t["logistic"][1]) <= 1e-2 * 0.25
    p = MallowsParams(math.exp(-1e-3), 1.0)
    got = m.cdf_product(p, [(0, int(math.floor(1.0 / 1e-3))), (1, 0)]).prob
    assert got == pytest.approx(1 / ((1 + math.exp(-1)) * 2), abs=1e-2)
