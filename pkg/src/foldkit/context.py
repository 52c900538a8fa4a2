"""The ambient pair (group, free factor system), encoded by two integers."""

from __future__ import annotations

from dataclasses import dataclass


class ContextError(ValueError):
    pass


@dataclass(frozen=True)
class FactorContext:
    """Number of atom conjugacy classes and the corank of the system."""

    atom_count: int
    corank: int

    def __post_init__(self):
        if self.atom_count < 0 or self.corank < 0:
            raise ContextError("atom_count and corank must be nonnegative")
        if self.atom_count + self.corank < 1:
            raise ContextError("trivial group")

    @property
    def kurosh_rank(self) -> int:
        return self.atom_count + self.corank

    @property
    def max_edges(self) -> int:
        return 2 * self.atom_count + 3 * self.corank - 3

    @property
    def elementary_risk(self) -> bool:
        """Small contexts are accepted but flagged; constants need max_edges >= 1."""
        return self.atom_count + 2 * self.corank < 3

    def as_dict(self) -> dict:
        return {"atom_count": self.atom_count, "corank": self.corank}


@dataclass(frozen=True)
class DeltaConstants:
    max_edges: int
    kurosh_rank_gamma: int
    jumping_bound: int
    process_one_bound: int
    delta1: int
    delta2: int
    delta31: int
    delta33: int
    delta32: int
    delta3: int

    def as_dict(self) -> dict:
        return {
            "max_edges": self.max_edges,
            "kurosh_rank_gamma": self.kurosh_rank_gamma,
            "jumping_bound": self.jumping_bound,
            "process_one_bound": self.process_one_bound,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta31": self.delta31,
            "delta33": self.delta33,
            "delta32": self.delta32,
            "delta3": self.delta3,
        }


def derive_constants(ctx: FactorContext) -> DeltaConstants:
    """All distance constants, in exact integer arithmetic."""
    a, c = ctx.atom_count, ctx.corank
    me = 2 * a + 3 * c - 3
    if me < 1:
        raise ContextError("elementary context: max_edges = %d" % me)
    kr = a + c
    jumping = me * kr
    p1 = 4 * me + 2
    d1 = (1 + jumping) * (p1 + 2 * me) + 1
    d2 = d1 + 4
    d31 = 2 * d2 + 1
    d33 = 16 * a + 24 * c - 18
    d32 = d33 + d2 + 1
    return DeltaConstants(
        max_edges=me,
        kurosh_rank_gamma=kr,
        jumping_bound=jumping,
        process_one_bound=p1,
        delta1=d1,
        delta2=d2,
        delta31=d31,
        delta33=d33,
        delta32=d32,
        delta3=max(d31, d32),
    )
