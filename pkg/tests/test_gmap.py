import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from foldkit.context import FactorContext
from foldkit.gmap import (
    MapError, compose, gates, identity_map, make_map, matrix, spectral_analysis, tighten,
    transition_matrix,
)
from foldkit.harness import random_foldable_map, random_positive_auto
from foldkit.splitting import (
    DecoratedPath, crossing_number, is_tight, path_concat, path_from_edges, path_tighten, rose,
)

R2 = rose(2)


def fib():
    return make_map(R2, R2, {1: [1, 2], 2: [1]})


def substitute(word, rules, n):
    """Plain string substitution, the oracle for iterated positive images."""
    for _ in range(n):
        word = "".join(rules[ch] for ch in word)
    return word


def test_tighten_cancels_backtrack():
    m = make_map(R2, R2, {1: [1, 2, -2], 2: [2]})
    t = tighten(m)
    assert t.edge_images[1].edges == (1,)
    assert t.tight


def test_tighten_keeps_decorated_backtrack():
    p = DecoratedPath(0, 0, (1, -1), ((), (("A1", 1),), ()))
    assert path_tighten(p) == p


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sampled_from([1, -1, 2, -2]), min_size=8, max_size=8))
def test_tighten_idempotent(word):
    p = path_tighten(path_from_edges(R2, word))
    assert is_tight(p)
    assert path_tighten(p) == p


def test_gates_fibonacci():
    # [DERIVED] first letters of the images of +a, +b, -a, -b are a, a, b-bar, a-bar
    g = gates(fib())
    assert g.gates[0] == ((1, 2), (-1,), (-2,))
    assert g.foldable


def test_gates_identity():
    g = gates(identity_map(R2))
    assert g.count(0) == 4


def test_gates_collapsing_map():
    m = make_map(R2, R2, {1: [2], 2: [2]})
    assert gates(m).gates[0] == ((1, 2), (-1, -2))


def test_gates_trivial_image():
    m = make_map(R2, R2, {1: [], 2: [2]})
    with pytest.raises(MapError, match="derivative undefined"):
        gates(m)


def test_compose():
    f = fib()
    assert compose(identity_map(R2), f).same_as(f)
    ff = compose(f, f)
    assert ff.edge_images[1].edges == (1, 2, 1)
    assert ff.edge_images[2].edges == (1, 2)


def test_compose_mismatch():
    with pytest.raises(MapError):
        compose(identity_map(rose(3)), fib())


def test_crossing_numbers():
    assert crossing_number(DecoratedPath(0, 0, (), ((),)), 1) == 0
    assert crossing_number(path_from_edges(R2, [1, 2, -1]), 1) == 2
    f5 = fib()
    for _ in range(4):
        f5 = compose(fib(), f5)
    word = substitute("a", {"a": "ab", "b": "a"}, 5)
    assert crossing_number(f5.edge_images[1], 2) == word.count("b") == 5


def test_transition_matrices():
    assert transition_matrix(identity_map(R2)) == matrix([[1, 0], [0, 1]])
    assert transition_matrix(fib()) == matrix([[1, 1], [1, 0]])
    f = fib()
    assert transition_matrix(compose(f, f)) == transition_matrix(f) @ transition_matrix(f)


def test_spectral_fibonacci():
    rep = spectral_analysis(matrix([[1, 1], [1, 0]]))
    assert rep.irreducible and rep.aperiodic and rep.cls == "EG"
    assert abs(rep.pf_eigenvalue - (1 + math.sqrt(5)) / 2) < 1e-9
    lo, hi = rep.bracket
    assert lo <= rep.pf_eigenvalue <= hi


def test_spectral_permutation():
    rep = spectral_analysis(matrix([[0, 1], [1, 0]]))
    assert rep.irreducible and rep.period == 2 and rep.cls == "NEG"
    assert rep.pf_eigenvalue == 1.0


def test_spectral_small():
    assert spectral_analysis(matrix([[1]])).cls == "NEG"
    assert spectral_analysis(matrix([[0, 0], [0, 0]])).cls == "zero"


CTXS = [FactorContext(0, 2), FactorContext(0, 3), FactorContext(1, 2), FactorContext(2, 2)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(CTXS))
def test_multiplicativity_random(seed, ctx):
    rng = random.Random(seed)
    f = random_positive_auto(ctx, rng, 3)
    g = random_positive_auto(ctx, rng, 3)
    assert transition_matrix(compose(g, f)) == transition_matrix(g) @ transition_matrix(f)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(CTXS))
def test_column_sums_and_foldability(seed, ctx):
    m = random_foldable_map(ctx, random.Random(seed), 3)
    assert m.foldable
    sums = transition_matrix(m).column_sums()
    assert sums == [len(m.edge_images[e]) for e in m.domain.edge_ids]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([1, 2]), min_size=1, max_size=6),
       st.lists(st.sampled_from([1, 2]), min_size=1, max_size=6))
def test_crossing_additive(a, b):
    pa, pb = path_from_edges(R2, a), path_from_edges(R2, b)
    ab = path_concat(pa, pb)
    for e in (1, 2):
        assert crossing_number(ab, e) == crossing_number(pa, e) + crossing_number(pb, e)
