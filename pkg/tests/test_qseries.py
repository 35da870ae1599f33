import itertools
import math

import numpy as np
import pytest

from qmallows.qseries import (
    MallowsParams, TruncationError, TruncationPolicy, finite_qpoch, log_qpoch, log_qpoch_inf,
    log_qbinomial, mixture_weight, mixture_weights, tail_product, verify_identity,
)


def test_finite_qpoch_values():
    assert finite_qpoch(0.5, 0) == 1.0
    assert finite_qpoch(0.5, 1) == 0.5
    assert finite_qpoch(0.5, 3) == pytest.approx(0.328125, rel=1e-15)


@pytest.mark.parametrize("q", [0.1, 0.5, 0.9])
def test_qpoch_recursion(q):
    for n in range(20):
        assert log_qpoch(q, n + 1) == pytest.approx(log_qpoch(q, n) + math.log1p(-q ** (n + 1)), abs=1e-14)


def test_qpoch_inf_matches_long_product():
    q = 0.7
    direct = math.fsum(math.log1p(-q ** k) for k in range(1, 2000))
    assert log_qpoch_inf(q) == pytest.approx(direct, abs=1e-13)


def test_tail_product_examples():
    assert tail_product(1.0, 0.0, 0.5) == 1.0
    assert tail_product(1e-30, 0.5, 0.5) == pytest.approx(1.0, abs=1e-15)
    direct = math.prod(1 + 0.5 ** (k + 0.5) for k in range(200))
    assert tail_product(1.0, 0.5, 0.5) == pytest.approx(direct, rel=1e-14)


def test_truncation_cap_raises():
    with pytest.raises(TruncationError):
        log_qpoch_inf(0.999, TruncationPolicy(tol=1e-14, max_terms=10))


def test_mixture_weights_sum_and_symmetry():
    total = math.fsum(math.exp(mixture_weight(c, 0.5, 1.0)) for c in range(-40, 41))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert float(mixture_weight(3, 0.5, 2.0)) == pytest.approx(float(mixture_weight(-3, 0.5, 0.5)), abs=1e-15)
    cs, w, tail = mixture_weights(0.9, 4.0)
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-12)
    assert tail < 1e-14


def test_w0_against_independent_products():
    q = 0.5
    norm = math.prod(1 - q ** k for k in range(1, 61)) * math.prod((1 + q ** (k + 0.5)) ** 2 for k in range(60))
    assert math.exp(mixture_weight(0, q, 1.0)) == pytest.approx(1 / norm, rel=1e-14)


def test_qbinomial_small():
    # [4 choose 2]_q = 1 + q + 2q^2 + q^3 + q^4
    q = 0.3
    assert math.exp(log_qbinomial(q, 4, 2)) == pytest.approx(1 + q + 2 * q**2 + q**3 + q**4, rel=1e-14)


def test_identity_examples():
    assert verify_identity("euler", {"q": 0.5, "z": 0}) == 0.0
    assert verify_identity("single_site", {"q": 0.5, "alpha": 1.3, "x": 3}) < 1e-12
    assert verify_identity("alternating", {"q": 0.5, "alpha": 0.7, "x1": 2, "i": 0, "b": 1, "k": 3}) < 1e-12


@pytest.mark.parametrize("q,alpha", list(itertools.product([0.2, 0.6, 0.85], [0.3, 1.0, 3.0])))
def test_neighbor_identity_grid(q, alpha):
    for xs in itertools.combinations_with_replacement(range(-3, 4), 3):
        assert verify_identity("neighbors", {"q": q, "alpha": alpha, "x": list(xs)}) < 1e-10


def test_unknown_identity():
    with pytest.raises(KeyError):
        verify_identity("nope", {"q": 0.5})


def test_params_validation():
    with pytest.raises(ValueError):
        MallowsParams(1.0, 1.0)
    with pytest.raises(ValueError):
        MallowsParams(0.5, 0.0)
    p = MallowsParams(0.5, 2.0)
    assert p.inverted().alpha == 0.5
    assert MallowsParams(0.0).degenerate
    assert np.isfinite(p.logq)
