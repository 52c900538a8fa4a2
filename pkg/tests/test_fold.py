import random

import pytest
from hypothesis import given, settings, strategies as st

from foldkit.context import FactorContext, derive_constants
from foldkit.fold import (
    EdgeFiberStrategy, FoldError, FoldStrategy, NoDoubleOmegaStrategy, PrioritizeStrategy,
    RandomStrategy, Segment, Step1Strategy, covering_rank_data, factorize, is_isomorphism,
    maximal_fold, needle_audits, pullback, run_step1_processes, sewing_needle_audit,
    simplicial_model, two_over_all_check, verify_replay,
)
from foldkit.gmap import GraphMap, compose, identity_map, make_map, make_turn
from foldkit.harness import random_needle_map, random_positive_auto
from foldkit.splitting import DecoratedPath, Label, path_from_edges, rose, thistle

R2 = rose(2)


def fib():
    return make_map(R2, R2, {1: [1, 2], 2: [1]})


def power(f, k):
    acc = f
    for _ in range(k - 1):
        acc = compose(f, acc)
    return acc


def groups_of(fac):
    return [(g.turn.vertex, g.turn.first, g.turn.second, g.count) for g in fac.groups]


def fibonacci(n):
    a, b = 1, 1
    for _ in range(n - 1):
        a, b = b, a + b
    return a


def test_identity_zero_folds():
    fac = factorize(identity_map(R2))
    assert fac.fold_count == 0 and fac.complete and fac.terminal_isomorphism()
    assert fac.certificate.total == 0


def test_fibonacci_one_fold():
    # [DERIVED] total image length 3 minus 2 edges
    fac = factorize(fib())
    assert fac.fold_count == 1
    assert fac.round_trip() and fac.terminal_isomorphism()
    assert fac.certificate.total == 2


def test_abab_four_folds():
    m = make_map(R2, R2, {1: [1, 2, 1, 2], 2: [1, 2]})
    fac = factorize(m)
    assert fac.fold_count == 6 - 2
    assert fac.round_trip()
    # the map is not injective, so one fold loses rank and the terminal is not invertible
    assert any("rank-loss" in line for line in fac.log)
    assert not fac.terminal_isomorphism()


def test_full_edge_fold_onto_single_loop():
    cod = rose(1, FactorContext(0, 2))
    m = GraphMap(R2, cod, {0: 0}, {1: path_from_edges(cod, [1]), 2: path_from_edges(cod, [1])})
    step, rem = maximal_fold(m, make_turn(0, 1, 2))
    assert len(step.splitting.edges) == 1
    assert is_isomorphism(rem)


def test_fibonacci_maximal_fold():
    step, rem = maximal_fold(fib(), make_turn(0, 1, 2))
    assert step.kind == "two-orbit"
    assert is_isomorphism(rem)
    assert compose(rem, step.fold_map).same_as(fib())


def iiia_map():
    t = thistle(1, 2)
    loop = DecoratedPath(0, 0, (1, -1), ((), (("A1", 1),), ()))
    return GraphMap(t, t, {0: 0, 1: 1},
                    {1: path_from_edges(t, [1]), 2: loop, 3: path_from_edges(t, [3])},
                    {"A1": (("A1", 1),)})


def test_needle_iiia_creates_cyclic_label():
    step, rem = maximal_fold(iiia_map(), make_turn(0, 2, -2))
    assert step.kind == "needle-IIIA"
    new = [lab for v, lab in step.splitting.vertices if lab == Label(frozenset(), 1)]
    assert len(new) == 1
    s = step.splitting
    assert s.betti + s.total_free_rank == s.context.corank
    assert sewing_needle_audit(step, rem)["pass"]


def test_needle_ia_audit():
    m = make_map(R2, R2, {1: [2, 1, -2], 2: [2]})
    step, rem = maximal_fold(m, make_turn(0, 1, -1))
    assert step.kind == "needle-IA"
    rep = sewing_needle_audit(step, rem)
    assert rep["pass"] and not rep["violations"]


def test_audit_rejects_non_needle():
    step, rem = maximal_fold(fib(), make_turn(0, 1, 2))
    with pytest.raises(FoldError):
        sewing_needle_audit(step, rem)


def test_maximal_fold_errors():
    with pytest.raises(FoldError):
        maximal_fold(fib(), make_turn(0, 1, -1))
    with pytest.raises(FoldError):
        maximal_fold(fib(), make_turn(0, 1, 1))


def test_prioritize_one_loop():
    m = make_map(rose(3), rose(3), {1: [1, 2], 2: [2], 3: [3, 1]})
    fac = factorize(m, PrioritizeStrategy([1, 2]))
    seg = fac.certificate.segments[0]
    assert seg.tag == "prioritized" and seg.bound <= 2
    assert seg.witness["component_bijection"] and seg.witness["immersion"]
    assert verify_replay(m, groups_of(fac), fac.certificate.segments, fac.certificate.total).ok


def test_prioritize_nothing_foldable():
    m = make_map(rose(3), rose(3), {1: [1, 2], 2: [2], 3: [3, 1]})
    fac = factorize(m, PrioritizeStrategy([3]))
    seg = fac.certificate.segments[0]
    assert seg.start == seg.end and seg.bound == 0


def test_prioritize_improper():
    with pytest.raises(FoldError):
        factorize(fib(), PrioritizeStrategy([1, 2]))


def test_edge_fiber_singleton():
    m = make_map(rose(3), rose(3), {1: [1, 2], 2: [2], 3: [3]})
    fac = factorize(m, EdgeFiberStrategy(3))
    seg = fac.certificate.segments[-1]
    assert seg.witness["fiber"] == 1
    assert seg.bound <= 2


def test_edge_fiber_fibonacci():
    # [DERIVED] subdivided images: a1 -> a, a2 -> b, b -> a, so a has two preimages
    fac = factorize(fib(), EdgeFiberStrategy(1))
    seg = fac.certificate.segments[-1]
    h = simplicial_model(fib())
    preimages = [e for e, p in h.edge_images.items() if abs(p.edges[0]) == 1]
    assert seg.witness["fiber"] == len(preimages) == 2
    assert seg.bound <= 4 * 2


def test_jumps_identity_and_single_fold():
    assert covering_rank_data(factorize(identity_map(R2)))["total_jumps"] == 0
    m = make_map(rose(3), rose(3), {1: [1, 2], 2: [2], 3: [3]})
    data = covering_rank_data(factorize(m))
    assert data["jumps"] == [(1, 1)]


def test_step1_edge_found():
    out = run_step1_processes(power(fib(), 6))
    assert out["outcome"] == "edge-found"


def test_step1_bounded():
    m = make_map(rose(3), rose(3), {1: [1, 2], 2: [2], 3: [3]})
    out = run_step1_processes(m)
    k = derive_constants(FactorContext(0, 3))
    assert out["outcome"] == "bounded"
    assert out["bound"] == k.delta1 - 1 == 722
    assert out["total"] <= out["bound"]
    assert run_step1_processes(identity_map(R2))["total"] == 0
    swap = make_map(R2, R2, {1: [2], 2: [1]})
    out = run_step1_processes(swap)
    assert out["outcome"] == "bounded" and out["total"] == 0 and out["bound"] == 140


def test_two_over_all_fibonacci():
    for k in (4, 6, 8):
        rep = two_over_all_check(power(fib(), k), 1)
        assert min(rep["profile"].values()) >= fibonacci(k - 1)
        assert rep["hypothesis"] == "not-verifiable"


def test_two_over_all_subforest():
    m = make_map(rose(3), rose(3), {1: [1, 2], 2: [2], 3: [3]})
    rep = two_over_all_check(m, 1)
    assert rep["profile"][2] == 0 or rep["profile"][3] == 0


def test_pullback_identity():
    pb = pullback(identity_map(R2), 1)
    assert pb.components == [(1,)]


def test_pullback_fibonacci_square():
    pb = pullback(simplicial_model(power(fib(), 2)), 1)
    assert pb.sharp_branched <= 6 and pb.within_bound and pb.sections_ok


def test_verify_detects_corruption():
    fac = factorize(fib())
    segs = [Segment(s.tag, s.start, s.end, 1, s.witness) for s in fac.certificate.segments]
    res = verify_replay(fib(), groups_of(fac), segs, 1)
    assert not res.ok and res.failing == 0


def test_cap_reports_partial():
    m = make_map(R2, R2, {1: [1, 2, 1, 2], 2: [1, 2]})
    fac = factorize(m, cap=2)
    assert fac.capped and not fac.complete and fac.fold_count == 2


CTXS = [FactorContext(0, c) for c in range(2, 6)] + [FactorContext(1, 2), FactorContext(2, 2)]
STRATS = [lambda: FoldStrategy(), lambda: RandomStrategy(5), lambda: NoDoubleOmegaStrategy(),
          lambda: Step1Strategy(), lambda: EdgeFiberStrategy(1)]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(CTXS), st.integers(0, len(STRATS) - 1))
def test_round_trip_all_strategies(seed, ctx, k):
    m = random_positive_auto(ctx, random.Random(seed), 4)
    fac = factorize(m, STRATS[k]())
    assert fac.round_trip() and fac.terminal_isomorphism()
    assert verify_replay(m, groups_of(fac), fac.certificate.segments, fac.certificate.total).ok
    for st_ in fac.steps:
        s = st_.splitting
        assert s.betti + s.total_free_rank == ctx.corank
    assert covering_rank_data(fac)["within_bound"]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_strategy_independent_endpoints(seed):
    m = random_positive_auto(FactorContext(0, 3), random.Random(seed), 4)
    a = factorize(m)
    b = factorize(m, RandomStrategy(seed))
    assert a.terminal_isomorphism() and b.terminal_isomorphism()
    assert a.fold_count == b.fold_count


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_needle_audits_pass(seed):
    m = random_needle_map(FactorContext(0, 3), random.Random(seed), 2)
    assert all(a["pass"] for a in needle_audits(m))
