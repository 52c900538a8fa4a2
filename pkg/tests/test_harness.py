import random

import pytest

from foldkit.context import FactorContext
from foldkit.harness import (
    GenerationError, GenSpec, SUITES, base_splitting, generate, random_eg_rep,
    random_step1_instance, random_two_stratum_rep, run_suite, trial_seeds,
)
from foldkit.fold import covering_edge
from foldkit.traintrack import compute_filtration

CTXS = [FactorContext(0, 2), FactorContext(0, 3), FactorContext(1, 2), FactorContext(2, 1)]


def test_base_splitting_shapes():
    assert len(base_splitting(FactorContext(0, 3)).edges) == 3
    s = base_splitting(FactorContext(2, 1))
    assert s.validate() == [] and s.context == FactorContext(2, 1)


def test_trial_seeds_deterministic():
    assert trial_seeds(7, 5) == trial_seeds(7, 5)
    assert trial_seeds(7, 5) != trial_seeds(8, 5)
    assert trial_seeds(7, 3) == trial_seeds(7, 5)[:3]


@pytest.mark.parametrize("kind", ["random_splitting", "random_positive_auto",
                                  "random_foldable_map", "random_needle_map"])
def test_generate_deterministic(kind):
    for ctx in CTXS:
        if kind == "random_needle_map" and ctx.corank < 2:
            with pytest.raises(GenerationError):
                generate(GenSpec(ctx, kind, 11))
            continue
        a = generate(GenSpec(ctx, kind, 11))
        b = generate(GenSpec(ctx, kind, 11))
        if kind == "random_splitting":
            assert a == b and a.validate() == []
        else:
            assert a.same_as(b) and a.validate() == []


def test_generated_maps_are_foldable():
    for seed in range(10):
        m = generate(GenSpec(FactorContext(0, 3), "random_foldable_map", seed))
        assert m.tight and m.foldable


def test_unknown_kind():
    with pytest.raises(GenerationError):
        generate(GenSpec(FactorContext(0, 2), "random_banana", 1))


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suite("no-such-suite", 1, 0)


def test_step1_instances_are_uncovered():
    rng = random.Random(5)
    for _ in range(10):
        assert covering_edge(random_step1_instance(rng)) is None


def test_eg_rep_single_stratum():
    rng = random.Random(9)
    for _ in range(5):
        filt = compute_filtration(random_eg_rep(rng))
        assert [s.cls for s in filt.strata] == ["EG-aperiodic"]


@pytest.mark.parametrize("top", ["EG", "NEG"])
def test_two_stratum_rep(top):
    rng = random.Random(4)
    rep = random_two_stratum_rep(rng, top=top)
    filt = compute_filtration(rep)
    assert len(filt.strata) >= 2 and filt.strata[-1].cls.startswith(top)


@pytest.mark.parametrize("name", sorted(SUITES))
def test_suite_small_run(name):
    rep = run_suite(name, 3, 2024)
    assert rep.ok, rep.errors
    assert rep.passed == 3 and rep.failing_seeds == []
    again = run_suite(name, 3, 2024)
    assert again.digest == rep.digest


def test_report_dict():
    d = run_suite("generator-soundness", 2, 1).as_dict()
    assert set(d) == {"name", "trials", "seed", "passed", "failed", "failing_seeds", "errors", "digest"}
