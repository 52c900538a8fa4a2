import itertools
import math
import random
from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings, strategies as st

from foldkit.gmap import compose, gates, identity_map, make_map
from foldkit.outerspace import (
    MetricError, check_metric, claim_construction, cyclic_reduce, is_grushko, is_normalized,
    lipschitz_constant, metric, optimal_instance, optimality_report, projection_inequality_report,
    speeds, stretch_factor,
)
from foldkit.context import FactorContext
from foldkit.splitting import make_splitting, path_from_edges, rose

R2 = rose(2)
S = metric(R2, {1: Fr(1, 2), 2: Fr(1, 2)})
T = metric(R2, {1: Fr(2, 3), 2: Fr(1, 3)})


def fib(s=S, t=S):
    return make_map(s, t, {1: [1, 2], 2: [1]})


def reduce_cyclic(word):
    """Free then cyclic reduction of a list of nonzero ints."""
    out = []
    for x in word:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    while len(out) >= 2 and out[0] == -out[-1]:
        out = out[1:-1]
    return out


def apply(images, word):
    out = []
    for x in word:
        out.extend(images[x] if x > 0 else [-y for y in reversed(images[-x])])
    return out


def test_metric_checks():
    assert is_grushko(S) and is_normalized(S)
    with pytest.raises(MetricError):
        check_metric(R2)
    free = make_splitting(FactorContext(0, 2), [(0, [], 1)], [(1, 0, 0, 1)])
    assert not is_grushko(free)


def test_lipschitz_identity():
    lip, tension = lipschitz_constant(identity_map(S))
    assert lip == 1 and tension == (1, 2)


def test_lipschitz_fibonacci():
    # [DERIVED] speeds |ab|/|a| = 2 and |a|/|b| = 1
    assert speeds(fib()) == {1: 2, 2: 1}
    assert lipschitz_constant(fib()) == (2, (1,))


def test_zero_speed_excluded():
    m = make_map(S, S, {1: [1], 2: []}, vertex_map={0: 0})
    lip, tension = lipschitz_constant(m)
    assert speeds(m)[2] == 0 and tension == (1,)


def test_stretch_self():
    st_ = stretch_factor(S, S)
    assert st_.ratio == 1 and st_.value == 0


def test_stretch_skew():
    # [DERIVED] oracle over the four loops a, b, ab, ab-bar
    oracle = max(sum(T.length(abs(x)) for x in w) / sum(S.length(abs(x)) for x in w)
                 for w in ([1], [2], [1, 2], [1, -2]))
    st_ = stretch_factor(S, T)
    assert st_.ratio == oracle == Fr(4, 3)
    assert st_.candidate_complete


def test_stretch_fibonacci_matches_exhaustive():
    images = {1: [1, 2], 2: [1]}
    best = Fr(0)
    for n in range(1, 7):
        for w in itertools.product([1, -1, 2, -2], repeat=n):
            w = list(w)
            if reduce_cyclic(w) != w:
                continue
            best = max(best, Fr(len(reduce_cyclic(apply(images, w))), len(w)))
    assert stretch_factor(S, S, marking=fib()).ratio == best == 2


def test_cyclic_reduce():
    p = path_from_edges(R2, [-2, 1, 2])
    assert cyclic_reduce(p).edges == (1,)


def test_optimality():
    assert optimality_report(identity_map(S)).optimal
    rep = optimality_report(fib())
    assert rep.lip == 2 and rep.max_ratio == 2 and rep.gap == 0 and rep.optimal


def test_claim_basis_case():
    res = claim_construction(fib())
    assert res.ok and not res.steps and not res.collapsed
    assert res.u == S and res.g.same_as(fib())


def test_claim_zero_speed_and_spray():
    m = optimal_instance(random.Random(3), r=2, s_loops=1, unfold=False, blowup=True)
    res = claim_construction(m)
    assert res.ok
    assert len(res.collapsed) >= 1
    assert gates(res.g).foldable


def test_claim_spray_gates():
    m = optimal_instance(random.Random(1), r=3, s_loops=2, unfold=True, blowup=False)
    res = claim_construction(m)
    assert res.ok and res.steps
    assert all(step.new_vertex_gates >= 2 for step in res.steps)
    assert lipschitz_constant(res.g)[0] == lipschitz_constant(m)[0]


def test_claim_rejects_non_optimal():
    # a -> a b a-bar puts both ends of the tension edge in one gate
    m = make_map(S, S, {1: [1, 2, -1], 2: [1]})
    rep = optimality_report(m)
    assert rep.tension_gates == {0: 1} and rep.gap == 2 and not rep.optimal
    with pytest.raises(MetricError):
        claim_construction(m)


def test_projection_self():
    rep = projection_inequality_report(identity_map(S))
    assert rep.lhs_upper == 0 and rep.status == "confirmed"
    assert rep.rhs == pytest.approx(2 * 291 + 1)


def test_projection_fibonacci():
    rep = projection_inequality_report(fib())
    # [PAPER] RHS is (291 / log 2) d + 583
    assert rep.rhs == pytest.approx(291 / math.log(2) * math.log(2) + 583)
    assert rep.lhs_upper == 2 and rep.status == "confirmed"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(2, 3), st.integers(1, 2), st.booleans(), st.booleans())
def test_claim_random(seed, r, s_loops, unfold, blowup):
    m = optimal_instance(random.Random(seed), r, s_loops, unfold, blowup)
    assert optimality_report(m).optimal
    res = claim_construction(m)
    assert res.ok, res.certificate
    assert projection_inequality_report(m).status == "confirmed"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=2, max_size=2),
       st.lists(st.integers(1, 9), min_size=2, max_size=2))
def test_submultiplicative(la, lb):
    a = metric(R2, {1: Fr(la[0], sum(la)), 2: Fr(la[1], sum(la))})
    b = metric(R2, {1: Fr(lb[0], sum(lb)), 2: Fr(lb[1], sum(lb))})
    f = make_map(a, b, {1: [1, 2], 2: [1]})
    g = make_map(b, a, {1: [2, 1], 2: [1]})
    assert lipschitz_constant(compose(g, f))[0] <= lipschitz_constant(g)[0] * lipschitz_constant(f)[0]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=2, max_size=2))
def test_stretch_monotone_in_cap(lt):
    t = metric(R2, {1: Fr(lt[0], sum(lt)), 2: Fr(lt[1], sum(lt))})
    small = stretch_factor(S, t, cap=1).ratio
    big = stretch_factor(S, t, cap=4).ratio
    assert small <= big
