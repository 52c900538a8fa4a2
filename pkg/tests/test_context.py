import itertools

import pytest
from hypothesis import given, strategies as st

from foldkit.context import ContextError, FactorContext, derive_constants


def oracle(a, c):
    """Independent restatement of the constant formulas."""
    me = 2 * a + 3 * c - 3
    j = me * (a + c)
    p1 = 4 * me + 2
    d1 = (1 + j) * (p1 + 2 * me) + 1
    d2 = d1 + 4
    return me, j, p1, d1, d2, max(2 * d2 + 1, 16 * a + 24 * c - 18 + d2 + 1)


def test_golden_rank_two():
    # [PAPER] formulas evaluated at (0, 2)
    k = derive_constants(FactorContext(0, 2))
    assert (k.max_edges, k.kurosh_rank_gamma, k.jumping_bound, k.process_one_bound) == (3, 2, 6, 14)
    assert (k.delta1, k.delta2, k.delta31, k.delta33, k.delta32, k.delta3) == (141, 145, 291, 30, 176, 291)


def test_golden_two_atoms():
    # [PAPER] formulas evaluated at (2, 1)
    k = derive_constants(FactorContext(2, 1))
    assert (k.max_edges, k.kurosh_rank_gamma, k.jumping_bound, k.process_one_bound) == (4, 3, 12, 18)
    assert (k.delta1, k.delta2, k.delta3) == (339, 343, 687)


def test_elementary_rejected():
    with pytest.raises(ContextError, match="elementary"):
        derive_constants(FactorContext(0, 1))


def test_invalid_contexts():
    with pytest.raises(ContextError):
        FactorContext(-1, 2)
    with pytest.raises(ContextError):
        FactorContext(0, 0)


def test_elementary_risk_flag():
    assert FactorContext(0, 1).elementary_risk
    assert FactorContext(2, 0).elementary_risk
    assert not FactorContext(0, 2).elementary_risk


@given(st.integers(0, 10), st.integers(0, 10))
def test_matches_oracle(a, c):
    if 2 * a + 3 * c - 3 < 1:
        return
    k = derive_constants(FactorContext(a, c))
    me, j, p1, d1, d2, d3 = oracle(a, c)
    assert (k.max_edges, k.jumping_bound, k.process_one_bound, k.delta1, k.delta2, k.delta3) == (
        me, j, p1, d1, d2, d3)
    assert all(isinstance(v, int) for v in k.as_dict().values())


def test_monotone_on_grid():
    grid = {}
    for a, c in itertools.product(range(11), range(11)):
        if 2 * a + 3 * c - 3 >= 1:
            grid[a, c] = derive_constants(FactorContext(a, c)).as_dict()
    for (a, c), v in grid.items():
        for nb in ((a + 1, c), (a, c + 1)):
            if nb in grid:
                assert all(grid[nb][k] >= v[k] for k in v)
