import itertools
import json

import numpy as np
import pytest

from qmallows import sixvertex as sv
from qmallows.sampler import make_rng
from qmallows.stats import EmpiricalDist, tv_distance

VP = sv.VertexParams(0.3, 0.6)


@pytest.mark.parametrize("b", [0.0, 1.0])
def test_deterministic_weights(b):
    dom = sv.RectDomain(3, 3)
    cfg = sv.sample_lattice(sv.VertexParams(b, b), dom, make_rng(0), n=50)
    assert (cfg.top == cfg.top[0]).all() and (cfg.right == cfg.right[0]).all()
    law = sv.enumerate_exact(sv.VertexParams(b, b), dom, [sv.CutQuery(0, -1)])
    assert list(law.values()) == [1.0]


def test_crossing_frequency():
    freq, p = sv.crossing_frequency(0.4, 100_000, make_rng(1))
    assert abs(freq - 0.4) < 3 * np.sqrt(0.4 * 0.6 / 100_000)
    assert p > 1e-3


def test_vertex_rule_orders_colors():
    # the smaller color enters from below: crossing has probability b1
    dom = sv.RectDomain(1, 1, bottom=[0], left=[1])
    cfg = sv.sample_lattice(sv.VertexParams(1.0, 0.0), dom, make_rng(2))
    assert cfg.top[0, 0] == 0 and cfg.right[0, 0] == 1
    dom = sv.RectDomain(1, 1, bottom=[1], left=[0])
    cfg = sv.sample_lattice(sv.VertexParams(1.0, 0.0), dom, make_rng(2))
    assert cfg.top[0, 0] == 0 and cfg.right[0, 0] == 1


def test_heights_small_cases():
    empty = sv.RectDomain(2, 2, bottom=[None, None], left=[None, None])
    cfg = sv.sample_lattice(VP, empty, make_rng(3))
    assert sv.height_on_cut(cfg, sv.CutQuery(-1, -1)) == 0
    # a left-entering color that runs straight through exits on the right
    dom = sv.RectDomain(2, 2, bottom=[None, None], left=[5, None])
    cfg = sv.sample_lattice(VP, dom, make_rng(4))
    assert sv.height_on_cut(cfg, sv.CutQuery(-1, -1)) == 1


def test_height_additivity_over_color_classes():
    dom = sv.RectDomain(4, 3)
    cfg = sv.sample_lattice(VP, dom, make_rng(5), n=200)
    cut = sv.CutQuery(1, 0)
    total = sv.heights(cfg, [cut])[:, 0]
    origin = dom.origins()
    lo, hi = cut.columns(dom.height)
    W = dom.width
    parts = np.zeros_like(total)
    for chosen in ([c for c in origin if c % 2 == 0], [c for c in origin if c % 2]):
        top = np.isin(cfg.top, chosen) & (np.arange(W) > hi)[None, :]
        right = np.isin(cfg.right, chosen)
        src_top = np.vectorize(lambda v: origin.get(int(v), W))(cfg.top) < lo
        src_right = np.vectorize(lambda v: origin.get(int(v), W))(cfg.right) < lo
        parts += (top & src_top).sum(axis=1) + (right & src_right).sum(axis=1)
    assert (parts == total).all()


def test_exact_law_normalized_and_matches_sampling():
    dom = sv.RectDomain(4, 3)
    cuts = [sv.CutQuery(0, -1), sv.CutQuery(1, 0)]
    law = sv.enumerate_exact(VP, dom, cuts)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)
    full = sv.enumerate_exact(VP, dom, cuts, compact=False)
    assert max(abs(law[k] - full.get(k, 0)) for k in law) < 1e-14
    H = sv.heights(sv.sample_lattice(VP, dom, make_rng(6), n=40_000), cuts)
    emp = EmpiricalDist.from_samples(H)
    assert tv_distance(emp, law) < 0.015


@pytest.mark.parametrize("b1,b2", [(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)])
def test_exact_mass_grid(b1, b2):
    for w, h in itertools.product(range(1, 5), range(1, 5)):
        law = sv.enumerate_exact(sv.VertexParams(b1, b2), sv.RectDomain(w, h), [sv.CutQuery(-1, w - 1 - h)])
        assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)


def test_vertex_cap():
    with pytest.raises(ValueError):
        sv.enumerate_exact(VP, sv.RectDomain(10, 10), [sv.CutQuery(0, 0)], max_vertices=20)


def test_example_supports_and_perturbation():
    sd = sv.example_support_data()
    sup = sv.supports(sd)
    assert sup[0] == ([1, 2, 5, 6], [1, 2, 5, 6])
    assert sup[1] == ([5], [5])
    assert sv.check_support_condition(sd) == (True, None)
    bad = sv.SupportData(sd.A2, sd.B2, sd.C2, sd.D2, sd.S, sd.hats, [(1, 9), (3, 7)], sd.g)
    assert sv.check_support_condition(bad) == (False, 2)


def test_identity_data_is_trivially_invariant():
    sd = sv.SupportData(1, 5, 1, 5, 3, [(1, 3), (3, 5)], [(1, 3), (3, 5)])
    assert sv.check_support_condition(sd)[0]
    assert sv.verify_shift_invariance(sd, VP).deviation == 0.0


@pytest.mark.parametrize("S", [2, 3])
def test_example_exact_invariance(S):
    rep = sv.verify_shift_invariance(sv.example_support_data().with_S(S), VP)
    assert rep.deviation <= 1e-12


def test_example_invariance_fails_without_support_match():
    sd = sv.example_support_data()
    dom = sv.domain_for(sd)
    a = sv.enumerate_exact(VP, dom, sd.cuts("hats"))
    b = sv.enumerate_exact(VP, dom, [sv.CutQuery(0, 4), sv.CutQuery(1, 3)])
    assert max(abs(a.get(k, 0) - b.get(k, 0)) for k in set(a) | set(b)) > 0.05


def test_random_instances_are_invariant():
    rng = make_rng(7)
    for sd in sv.random_instances(rng, 6):
        assert sv.check_support_condition(sd)[0]
        assert sv.verify_shift_invariance(sd, VP).deviation <= 1e-12


def test_monte_carlo_mode():
    rep = sv.verify_shift_invariance(sv.example_support_data(), VP, mode="montecarlo", n=10_000,
                                     rng=make_rng(8))
    assert rep.deviation <= 0.03
    assert rep.p_value > 1e-3


def test_support_json_roundtrip():
    sd = sv.example_support_data()
    back = sv.SupportData.from_json(json.loads(json.dumps(sd.to_json())))
    assert back == sd


def test_find_support_permutation():
    sd = sv.example_support_data()
    g = sv.find_support_permutation(sv.SupportData(sd.A2, sd.B2, sd.C2, sd.D2, sd.S, sd.hats, sd.tildes))
    assert g is not None
    fixed = sv.SupportData(sd.A2, sd.B2, sd.C2, sd.D2, sd.S, sd.hats, sd.tildes, g)
    assert sv.check_support_condition(fixed)[0]


def test_asep_limit_small_epsilon():
    rng = make_rng(9)
    cuts = [sv.CutQuery(0, 0)]
    ref = EmpiricalDist.from_samples(sv.asep_step_heights(0.5, 2.0, cuts, 20_000, rng))
    h = EmpiricalDist.from_samples(sv.asep_limit_heights(0.5, 0.05, 2.0, cuts, 20_000, rng))
    assert tv_distance(h, ref) <= 0.03
