import random

import pytest
from hypothesis import given, settings, strategies as st

from foldkit.context import FactorContext
from foldkit.harness import random_splitting
from foldkit.splitting import (
    Label, SplittingError, barbell, collapse, covering_forest, free_factor_support, ffs,
    FreeFactorSystem, make_splitting, natural_structure, nesting_leq, path_from_edges,
    path_tighten, rose, subdivide, thistle,
)


def test_label_trivial():
    assert Label().trivial
    assert not Label(frozenset([1]), 0).trivial
    assert not Label(frozenset(), 1).trivial


def test_natural_edges_thistle():
    # [PAPER] thistle with two prickles and one petal
    assert len(natural_structure(thistle(2, 1)).edges) == 3


def test_natural_edges_rose():
    assert len(natural_structure(rose(4)).edges) == 4


def test_natural_edges_barbell():
    # [DERIVED] both vertices have valence 3, so each edge is natural
    ns = natural_structure(barbell())
    assert len(ns.edges) == 3
    assert ns.vertices == (0, 1)


def test_validate_catches_violations():
    ctx = FactorContext(0, 2)
    bad = make_splitting(ctx, [(0, [], 0)], [(1, 0, 0)])
    assert any("rank conservation" in e for e in bad.validate())
    leaf = make_splitting(ctx, [(0, [], 0), (1, [], 0)], [(1, 0, 0), (2, 0, 0), (3, 0, 1)])
    assert any("valence 1" in e for e in leaf.validate())
    atoms = make_splitting(FactorContext(2, 1), [(0, [1], 0)], [(1, 0, 0)])
    assert any("partition" in e for e in atoms.validate())


def test_collapse_prickle():
    s = thistle(2, 1)
    t, cm = collapse(s, [1])
    assert t.label(0) == Label(frozenset([1]), 0)
    assert ffs(t) == ffs(s)
    assert not t.validate()


def test_collapse_rose_loop():
    # [DERIVED] label arithmetic: one cycle contributes free rank one
    s = rose(2)
    t, _ = collapse(s, [2])
    assert t.label(0) == Label(frozenset(), 1)
    assert (s.betti, s.total_free_rank) == (2, 0)
    assert (t.betti, t.total_free_rank) == (1, 1)


def test_collapse_barbell_bar():
    t, _ = collapse(barbell(), [3])
    assert len(t.vertices) == 1 and len(t.edges) == 2
    assert ffs(t) == ffs(barbell()) == FreeFactorSystem(())


def test_collapse_to_point():
    with pytest.raises(SplittingError, match="collapse to point"):
        collapse(rose(2), [1, 2])


def test_free_factor_support():
    s = thistle(2, 1)
    assert free_factor_support(s, []).labels == (Label(frozenset([1])), Label(frozenset([2])))
    assert free_factor_support(rose(2), [1]).labels == (Label(frozenset(), 1),)
    assert free_factor_support(s, s.edge_ids).full


def test_nesting():
    a = FreeFactorSystem((Label(frozenset([1])), Label(frozenset([2]))))
    big = FreeFactorSystem((Label(frozenset([1, 2]), 1),))
    assert nesting_leq(a, big) == "yes"
    two = FreeFactorSystem((Label(frozenset(), 1), Label(frozenset(), 1)))
    one = FreeFactorSystem((Label(frozenset(), 1),))
    assert nesting_leq(two, one) == "no"
    assert nesting_leq(FreeFactorSystem(()), one) == "yes"


def test_covering_forest():
    s = rose(2)
    assert covering_forest(s, path_from_edges(s, [1])).edges == {1}
    cf = covering_forest(s, path_from_edges(s, [1, 2, -1]))
    assert cf.edges == {1, 2} and cf.covers
    t = thistle(2, 1)
    cf = covering_forest(t, path_from_edges(t, [1]))
    assert cf.edges == {1} and not cf.covers


def test_subdivide():
    s = rose(2)
    same, corr = subdivide(s, {})
    assert [(e.src, e.dst) for e in same.edges] == [(e.src, e.dst) for e in s.edges]
    t, corr = subdivide(s, {1: 1})
    assert len(t.edges) == len(s.edges) + 1 and t.betti == s.betti
    ns = natural_structure(t)
    assert sorted(ne.id for ne in ns.edges) == [1, 2]
    assert [ne.path for ne in ns.edges if ne.id == 1][0] == corr[1]


def test_tighten_path():
    s = rose(2)
    assert path_tighten(path_from_edges(s, [1, -1])).trivial


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from([(0, 2), (0, 3), (1, 1), (1, 2), (2, 1), (2, 2)]))
def test_random_splittings_valid(seed, ac):
    ctx = FactorContext(*ac)
    s = random_splitting(ctx, random.Random(seed), 5)
    assert not s.validate()
    assert len(natural_structure(s).edges) <= ctx.max_edges


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_collapse_matches_support(seed):
    rng = random.Random(seed)
    s = random_splitting(FactorContext(1, 2), rng, 4)
    k = rng.randint(0, len(s.edges) - 1)
    tau = rng.sample(s.edge_ids, k)
    t, _ = collapse(s, tau)
    assert t.betti + t.total_free_rank == s.context.corank
    assert free_factor_support(s, tau) == ffs(t)
