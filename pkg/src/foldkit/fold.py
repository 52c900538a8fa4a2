"""Stallings fold engine, fold strategies and distance-bound certificates.

The engine works on the simplicial model: the domain is subdivided so that
every edge maps to a single codomain edge, with decorations at both ends
(image of edge = dplus . token . dminus^-1).  An elementary fold identifies
two such edges leaving a common vertex with equal leading decoration and
token.  A maximal fold is the run of elementary folds along two natural
edges for as long as their images agree.

Splittings T_1..T_J are stored subdivided; T_0 is the original domain and the
first fold map includes the subdivision.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from foldkit.context import derive_constants
from foldkit.gmap import (
    GraphMap, MapError, Turn, compose, identity_map, make_turn,
)
from foldkit.splitting import (
    IDENTITY, DecoratedPath, Edge, Label, Splitting, Word, collapse, free_gen,
    natural_structure, path_from_edges, path_reverse, path_tighten, subdivide, subgraph_label,
    word_inv, word_mul,
)

FOLD_CAP = 10 ** 5


class FoldError(ValueError):
    pass


class CapExceeded(FoldError):
    pass


@dataclass
class FoldStep:
    index: int
    group: int
    turn: Turn
    segments: Tuple[Tuple[int, ...], Tuple[int, ...]]
    kind: str
    splitting: Splitting
    fold_map: GraphMap
    far_equal: bool = False


@dataclass
class Segment:
    tag: str
    start: int
    end: int
    bound: int
    witness: dict = field(default_factory=dict)


@dataclass
class DiameterCertificate:
    segments: List[Segment] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(s.bound for s in self.segments)


@dataclass
class GroupRecord:
    """One strategy decision: a turn and the number of elementary folds done on it."""
    turn: Turn
    count: int
    maximal: bool
    kind: str
    stop: str


@dataclass
class FoldFactorization:
    source: GraphMap
    splittings: List[Splitting]
    maps: List[GraphMap]
    steps: List[FoldStep]
    terminal: GraphMap
    subdivision: GraphMap
    certificate: DiameterCertificate
    groups: List[GroupRecord]
    log: List[str]
    strategy: str
    complete: bool
    capped: bool = False

    @property
    def fold_count(self) -> int:
        return len(self.steps)

    def composite(self) -> GraphMap:
        """h_J o f_J o ... o f_1, tightened at every stage."""
        acc = identity_map(self.source.domain)
        for f in self.maps:
            acc = compose(f, acc)
        return compose(self.terminal, acc)

    def round_trip(self) -> bool:
        return self.composite().same_as(self.source)

    def terminal_isomorphism(self) -> bool:
        return is_isomorphism(self.terminal)

    def simplicial_splitting(self, j: int) -> Splitting:
        return self.subdivision.codomain if j == 0 and self.steps else self.splittings[j]

    def step_map(self, j: int) -> GraphMap:
        """Simplicial fold map T_{j-1} -> T_j (j >= 1), with T_0 subdivided."""
        return self.steps[j - 1].fold_map


def is_isomorphism(h: GraphMap) -> bool:
    dom, cod = h.domain, h.codomain
    if len(dom.edges) != len(cod.edges) or len(dom.vertices) != len(cod.vertices):
        return False
    if any(len(p) != 1 for p in h.edge_images.values()):
        return False
    if sorted(abs(p.edges[0]) for p in h.edge_images.values()) != sorted(cod.edge_ids):
        return False
    if sorted(h.vertex_map.values()) != sorted(cod.vertex_ids):
        return False
    for v, lab in dom.vertices:
        w = h.vertex_map[v]
        atoms = set()
        for i in lab.atoms:
            img = h.gen_image("A%d" % i)
            atoms |= {int(g[1:]) for g, _ in img if g.startswith("A")}
        if atoms != set(cod.label(w).atoms) or lab.free_rank != cod.label(w).free_rank:
            return False
    return True


# ---------------------------------------------------------------- engine

class FoldEngine:
    def __init__(self, m: GraphMap, cap: int = FOLD_CAP):
        if not m.tight:
            raise FoldError("map is not tight")
        if any(p.trivial for p in m.edge_images.values()):
            raise FoldError("map has a trivial edge image")
        self.source = m
        self.codomain = m.codomain
        self.cap = cap
        s = m.domain
        t0, corr = subdivide(s, {e: len(p) - 1 for e, p in m.edge_images.items()})
        self.t0 = t0
        self.corr = corr
        self.labels: Dict[int, Label] = dict(t0.labels)
        self.ends: Dict[int, List[int]] = {e.id: [e.src, e.dst] for e in t0.edges}
        self.img: Dict[int, Tuple[Word, int, Word]] = {}
        self.vmap: Dict[int, int] = {v: m.vertex_map[v] for v in s.vertex_ids}
        for e in s.edges:
            p = m.edge_images[e.id]
            pieces = corr[e.id]
            k = len(pieces)
            for i, eid in enumerate(pieces):
                dplus = p.decos[i]
                dminus = word_inv(p.decos[k]) if i == k - 1 else IDENTITY
                self.img[eid] = (dplus, p.edges[i], dminus)
                if i < k - 1:
                    self.vmap[self.ends[eid][1]] = self.codomain.terminus(p.edges[i])
        self.hgens: Dict[str, Word] = {}
        for v in s.vertex_ids:
            for g in s.vertex_gens(v):
                self.hgens[g] = m.gen_image(g)
        self.sub_map = GraphMap(s, t0, {v: v for v in s.vertex_ids},
                                {e: path_from_edges(t0, corr[e]) for e in corr})
        self.cur = t0
        self.steps: List[FoldStep] = []
        self.groups: List[GroupRecord] = []
        self.cert = DiameterCertificate()
        self.log: List[str] = []
        self.capped = False
        self.rank_loss = 0

    # -- state queries

    @property
    def J(self) -> int:
        return len(self.steps)

    def splitting_at(self, j: int) -> Splitting:
        """Simplicial T_j (T_0 subdivided)."""
        return self.t0 if j == 0 else self.steps[j - 1].splitting

    def origin(self, d: int) -> int:
        a, b = self.ends[abs(d)]
        return a if d > 0 else b

    def terminus(self, d: int) -> int:
        return self.origin(-d)

    def key(self, d: int) -> Tuple[Word, int]:
        dp, t, dm = self.img[abs(d)]
        return (dp, t) if d > 0 else (dm, -t)

    def dfar(self, d: int) -> Word:
        dp, _, dm = self.img[abs(d)]
        return dm if d > 0 else dp

    def token(self, e: int) -> int:
        return self.img[abs(e)][1]

    def h(self) -> GraphMap:
        cod = self.codomain
        eimg = {}
        for e, (a, b) in self.ends.items():
            dp, t, dm = self.img[e]
            eimg[e] = DecoratedPath(self.vmap[a], self.vmap[b], (t,), (dp, word_inv(dm)))
        return GraphMap(self.cur, cod, dict(self.vmap), eimg, dict(self.hgens))

    def turns(self, edges: Optional[Set[int]] = None) -> List[Turn]:
        out = []
        for v in self.cur.vertex_ids:
            ds = [d for d in self.cur.directions(v) if edges is None or abs(d) in edges]
            for i, a in enumerate(ds):
                ka = self.key(a)
                for b in ds[i + 1:]:
                    if self.key(b) == ka:
                        out.append(Turn(v, a, b))
        return out

    def is_natural(self, v: int) -> bool:
        return not self.labels[v].trivial or self.cur.valence(v) != 2

    def chain(self, d: int) -> List[int]:
        """Directions along the natural edge starting with direction d."""
        out = [d]
        w = self.terminus(d)
        seen = {abs(d)}
        while not self.is_natural(w):
            nxt = [x for x in self.cur.directions(w) if x != -out[-1]][0]
            if abs(nxt) in seen:
                break
            seen.add(abs(nxt))
            out.append(nxt)
            w = self.terminus(nxt)
        return out

    # -- folding

    def _rebuild(self):
        vs = tuple(self.labels.items())
        es = tuple(Edge(e, a, b) for e, (a, b) in self.ends.items())
        self.cur = Splitting(self.source.domain.context, vs, es, True)

    def fold_pair(self, d1: int, d2: int, group: int, kind: str) -> FoldStep:
        if self.J >= self.cap:
            self.capped = True
            raise CapExceeded("iteration cap of %d folds exceeded" % self.cap)
        if abs(d1) == abs(d2):
            raise FoldError("degenerate turn")
        v = self.origin(d1)
        if self.origin(d2) != v or self.key(d1) != self.key(d2):
            raise FoldError("turn is not foldable")
        e1, e2 = sorted((d1, d2), key=abs)
        prev = self.cur
        w1, w2 = self.terminus(e1), self.terminus(e2)
        rename: Dict[str, Word] = {}
        vm = {x: x for x in self.labels}
        y: Word = IDENTITY
        if w1 != w2:
            if self.dfar(e1) != self.dfar(e2):
                raise FoldError("gauge change unsupported: far decorations differ")
            keep, gone = min(w1, w2), max(w1, w2)
            lk, lg = self.labels[keep], self.labels[gone]
            for j in range(lg.free_rank):
                new = free_gen(keep, lk.free_rank + j)
                rename[free_gen(gone, j)] = ((new, 1),)
                self.hgens[new] = self.hgens.pop(free_gen(gone, j))
            self.labels[keep] = Label(lk.atoms | lg.atoms, lk.free_rank + lg.free_rank)
            del self.labels[gone]
            del self.vmap[gone]
            for ab in self.ends.values():
                for i in (0, 1):
                    if ab[i] == gone:
                        ab[i] = keep
            vm[gone] = keep
            far_equal = False
        else:
            x = word_mul(self.dfar(e1), word_inv(self.dfar(e2)))
            if x:
                lab = self.labels[w1]
                g = free_gen(w1, lab.free_rank)
                self.labels[w1] = Label(lab.atoms, lab.free_rank + 1)
                self.hgens[g] = x
                y = ((g, 1),)
            else:
                # parallel edges with equal images: the input map was not injective
                self.rank_loss += 1
                self.log.append("rank-loss fold at fold %d" % (self.J + 1))
            far_equal = True
        del self.ends[abs(e2)]
        del self.img[abs(e2)]
        self._rebuild()
        new = self.cur
        eimg = {}
        for e in prev.edges:
            if e.id == abs(e2):
                p = DecoratedPath(vm[v], vm[w2], (e1,), (IDENTITY, y))
                eimg[e.id] = p if e2 > 0 else path_reverse(p)
            else:
                eimg[e.id] = path_from_edges(new, (e.id,))
        fmap = GraphMap(prev, new, vm, eimg, rename)
        step = FoldStep(self.J + 1, group, make_turn(v, d1, d2), ((abs(e1),), (abs(e2),)),
                        kind, new, fmap, far_equal)
        self.steps.append(step)
        return step

    def maximal_fold(self, turn: Turn, allowed: Optional[Set[int]] = None,
                     limit: Optional[int] = None) -> GroupRecord:
        """Fold the turn along both natural edges while images agree."""
        d1, d2 = turn.first, turn.second
        if turn.degenerate or abs(d1) == abs(d2):
            raise FoldError("degenerate turn")
        if self.origin(d1) != turn.vertex or self.origin(d2) != turn.vertex:
            raise FoldError("turn directions do not leave vertex %d" % turn.vertex)
        if self.key(d1) != self.key(d2):
            raise FoldError("turn is not foldable")
        c1, c2 = self.chain(d1), self.chain(d2)
        same = {abs(x) for x in c1} == {abs(x) for x in c2}
        cap = len(c1) // 2 if same else min(len(c1), len(c2))
        if limit is not None:
            cap = min(cap, limit)
        group = len(self.groups)
        kind = "needle" if same else "two-orbit"
        first = self.J
        stop = "natural-vertex"
        n = 0
        for i in range(cap):
            a, b = c1[i], c2[i]
            if allowed is not None and (abs(a) not in allowed or abs(b) not in allowed):
                stop = "outside-subforest"
                break
            if self.key(a) != self.key(b):
                stop = "image-differs"
                break
            st = self.fold_pair(a, b, group, kind)
            n += 1
            if allowed is not None:
                allowed.discard(st.segments[1][0])
            if st.far_equal:
                stop = "closed"
                break
        else:
            if same:
                stop = "midpoint"
        if limit is not None and n == limit and stop == "natural-vertex" and cap < (
                len(c1) // 2 if same else min(len(c1), len(c2))):
            stop = "limit"
        if same:
            kind = "needle-IIIA" if self.steps[-1].far_equal else "needle-IA"
        for st in self.steps[first:]:
            st.kind = kind
        rec = GroupRecord(turn, n, limit is None, kind, stop)
        self.groups.append(rec)
        return rec

    def single_fold(self, turn: Turn) -> GroupRecord:
        group = len(self.groups)
        st = self.fold_pair(turn.first, turn.second, group, "single")
        rec = GroupRecord(turn, 1, False, st.kind, "single")
        self.groups.append(rec)
        return rec

    # -- results

    def result(self, strategy: str) -> FoldFactorization:
        m = self.source
        if not self.steps:
            splittings = [m.domain]
            maps: List[GraphMap] = []
            terminal = m
        else:
            splittings = [m.domain] + [st.splitting for st in self.steps]
            maps = [compose(self.steps[0].fold_map, self.sub_map)]
            maps += [st.fold_map for st in self.steps[1:]]
            terminal = self.h()
        complete = not self.capped and not self.turns()
        return FoldFactorization(m, splittings, maps, list(self.steps), terminal, self.sub_map,
                                 self.cert, list(self.groups), list(self.log), strategy,
                                 complete, self.capped)


# ---------------------------------------------------------------- witnesses

def one_edge_type(s: Splitting, e: int):
    """The one-edge splitting obtained by collapsing every edge except e."""
    rest = [x for x in s.edge_ids if x != abs(e)]
    t, _ = collapse(s, rest)
    (edge,) = t.edges
    if edge.src == edge.dst:
        return ("loop", t.label(edge.src).sort_key())
    a, b = sorted([t.label(edge.src).sort_key(), t.label(edge.dst).sort_key()])
    return ("separating", a, b)


def prioritized_witness(engine_or_fac, start: int, end: int, outside: Set[int]) -> dict:
    """Common collapse witness: an edge never folded in the segment, same one-edge splitting."""
    s_end = engine_or_fac.splitting_at(end) if hasattr(engine_or_fac, "splitting_at") \
        else engine_or_fac.simplicial_splitting(end)
    cands = sorted(e for e in outside if e in s_end.edge_map)
    if not cands:
        return {"edge": None, "ok": False}
    e = cands[0]
    get = engine_or_fac.splitting_at if hasattr(engine_or_fac, "splitting_at") \
        else engine_or_fac.simplicial_splitting
    types = [one_edge_type(get(j), e) for j in range(start, end + 1)]
    ok = all(t == types[0] for t in types)
    return {"edge": e, "type": list(types[0]), "ok": ok}


def components_count(s: Splitting, edges: Set[int]) -> int:
    seen = set()
    n = 0
    for e in sorted(edges):
        if e in seen or e not in s.edge_map:
            continue
        n += 1
        todo = [e]
        while todo:
            x = todo.pop()
            if x in seen:
                continue
            seen.add(x)
            for v in (s.origin(x), s.terminus(x)):
                for d in s.directions(v):
                    if abs(d) in edges and abs(d) not in seen:
                        todo.append(abs(d))
    return n


# ---------------------------------------------------------------- strategies

class FoldStrategy:
    name = "arbitrary"

    def run(self, eng: FoldEngine) -> None:
        self.finish(eng)

    def pick(self, turns: List[Turn]) -> Turn:
        return turns[0]

    def finish(self, eng: FoldEngine) -> None:
        """Maximal folds in deterministic order; one single-fold segment each."""
        while True:
            ts = eng.turns()
            if not ts:
                return
            j0 = eng.J
            t = self.pick(ts)
            eng.maximal_fold(t)
            eng.cert.segments.append(Segment("single-fold", j0, eng.J, 2,
                                             {"group": len(eng.groups) - 1}))


class RandomStrategy(FoldStrategy):
    def __init__(self, seed: int):
        self.seed = seed
        self.rng = random.Random(seed)
        self.name = "random:%d" % seed

    def pick(self, turns):
        return self.rng.choice(turns)


def prioritize_segment(eng: FoldEngine, z: Set[int], tag: str = "prioritized",
                       bound: int = 2, stop=None) -> Segment:
    """Fold only turns inside the evolving subforest z (mutated in place)."""
    j0 = eng.J
    outside = set(eng.ends) - z
    comps = [components_count(eng.cur, z)]
    while True:
        ts = eng.turns(z)
        if not ts:
            break
        eng.maximal_fold(ts[0], allowed=z)
        comps.append(components_count(eng.cur, z))
        if stop is not None and stop():
            break
    folded = eng.J > j0
    wit = prioritized_witness(eng, j0, eng.J, outside) if folded else {"edge": None, "ok": True}
    wit["immersion"] = not eng.turns(z)
    wit["components"] = comps
    wit["component_bijection"] = len(set(comps)) <= 1
    seg = Segment(tag, j0, eng.J, bound if folded else 0, wit)
    eng.cert.segments.append(seg)
    return seg


class PrioritizeStrategy(FoldStrategy):
    """Prioritize folding a proper subforest given by natural edges of the domain."""

    def __init__(self, z: Sequence[int]):
        self.z = sorted(set(abs(e) for e in z))
        self.name = "prioritize:" + ",".join(str(e) for e in self.z)

    def run(self, eng):
        zs = set()
        for e in self.z:
            if e not in eng.corr:
                raise FoldError("unknown edge %d" % e)
            zs.update(eng.corr[e])
        if zs == set(eng.ends):
            raise FoldError("prioritized subforest must be proper")
        prioritize_segment(eng, zs)
        self.finish(eng)


def strategy_prioritize(z: Sequence[int]) -> PrioritizeStrategy:
    return PrioritizeStrategy(z)


class EdgeFiberStrategy(FoldStrategy):
    """Alternate prioritizing the complement of the fiber over e with single fiber folds."""

    def __init__(self, e: int):
        self.e = abs(e)
        self.name = "edge-fiber:%d" % self.e

    def fiber(self, eng) -> Set[int]:
        return {x for x in eng.ends if abs(eng.token(x)) == self.e}

    def run(self, eng):
        if self.e not in eng.codomain.edge_map:
            raise FoldError("unknown codomain edge %d" % self.e)
        j0 = eng.J
        fib0 = self.fiber(eng)
        if not fib0:
            raise FoldError("edge %d is not in the image" % self.e)
        parts = []
        sizes = [len(fib0)]
        while True:
            z = set(eng.ends) - self.fiber(eng)
            seg = prioritize_segment(eng, z)
            eng.cert.segments.pop()
            parts.append(seg)
            ts = eng.turns(self.fiber(eng))
            if not ts:
                break
            j1 = eng.J
            eng.single_fold(ts[0])
            parts.append(Segment("single-fold", j1, eng.J, 2, {"group": len(eng.groups) - 1}))
            sizes.append(len(self.fiber(eng)))
        if eng.turns():
            raise FoldError("edge-fiber strategy left foldable turns")
        bound = sum(p.bound for p in parts)
        wit = {"edge": self.e, "fiber": len(fib0), "fiber_sizes": sizes,
               "parts": [[p.tag, p.start, p.end, p.bound, p.witness] for p in parts],
               "ok": bound <= 4 * len(fib0)}
        eng.cert.segments.append(Segment("edge-fiber", j0, eng.J, bound, wit))


def strategy_edge_fiber(e: int) -> EdgeFiberStrategy:
    return EdgeFiberStrategy(e)


class NoDoubleOmegaStrategy(FoldStrategy):
    """Maximal folds, deferring sewing-needle folds that fold the tracked path onto itself.

    The tracked path is the image of the first natural edge of the domain.
    When only such folds remain they are done anyway and the event is logged.
    """

    name = "no-double-omega"

    def run(self, eng):
        track = set(eng.corr[min(eng.corr)])
        while True:
            ts = eng.turns()
            if not ts:
                return
            ok = []
            for t in ts:
                c1, c2 = eng.chain(t.first), eng.chain(t.second)
                same = {abs(x) for x in c1} == {abs(x) for x in c2}
                if same and abs(c1[0]) in track and abs(c2[0]) in track:
                    continue
                ok.append(t)
            if not ok:
                eng.log.append("double-omega fold forced at fold %d" % eng.J)
                ok = ts
            j0 = eng.J
            eng.maximal_fold(ok[0])
            track = {e for e in track if e in eng.ends}
            eng.cert.segments.append(Segment("single-fold", j0, eng.J, 2,
                                             {"group": len(eng.groups) - 1}))


def factorize(m: GraphMap, strategy: Optional[FoldStrategy] = None,
              cap: int = FOLD_CAP) -> FoldFactorization:
    strategy = strategy or FoldStrategy()
    if not m.tight:
        raise FoldError("input map is not tight")
    if not m.foldable:
        raise FoldError("input map is not foldable")
    eng = FoldEngine(m, cap)
    try:
        strategy.run(eng)
    except CapExceeded:
        eng.log.append("cap exceeded")
    return eng.result(strategy.name)


def maximal_fold(m: GraphMap, t: Turn) -> Tuple[FoldStep, GraphMap]:
    """Maximal fold of a turn of m; returns the combined step and the remainder map."""
    eng = FoldEngine(m)
    t0 = _lift_turn(eng, t)
    rec = eng.maximal_fold(t0)
    seg1 = tuple(st.segments[0][0] for st in eng.steps)
    seg2 = tuple(st.segments[1][0] for st in eng.steps)
    fm = eng.sub_map
    for st in eng.steps:
        fm = compose(st.fold_map, fm)
    step = FoldStep(eng.J, 0, t, (seg1, seg2), rec.kind, eng.cur, fm,
                    eng.steps[-1].far_equal if eng.steps else False)
    return step, eng.h()


def _lift_turn(eng: FoldEngine, t: Turn) -> Turn:
    """A turn of the natural domain, as a turn of the subdivided model."""
    def lift(d):
        pieces = eng.corr[abs(d)]
        return pieces[0] if d > 0 else -pieces[-1]
    return make_turn(t.vertex, lift(t.first), lift(t.second))


# ---------------------------------------------------------------- sewing needle audit

def sewing_needle_audit(step: FoldStep, remainder: GraphMap) -> dict:
    if not step.kind.startswith("needle"):
        raise FoldError("step is not a sewing needle fold")
    orbit_image = set()
    for e in step.segments[0] + step.segments[1]:
        orbit_image.add(e)
    return _needle_audit(remainder, orbit_image, step.kind)


def _needle_audit(remainder: GraphMap, orbit_image: Set[int], kind: str) -> dict:
    bad = []
    turns = []
    for v in remainder.domain.vertex_ids:
        ds = remainder.domain.directions(v)
        for i, a in enumerate(ds):
            for b in ds[i + 1:]:
                pa, pb = remainder.image(a), remainder.image(b)
                if (pa.decos[0], pa.edges[0]) == (pb.decos[0], pb.edges[0]):
                    turns.append((v, a, b))
                    if abs(a) in orbit_image and abs(b) in orbit_image:
                        bad.append((v, a, b))
    return {"kind": kind, "foldable_turns": turns, "violations": bad, "pass": not bad}


def needle_audits(m: GraphMap, strategy: Optional[FoldStrategy] = None) -> List[dict]:
    """Run a factorization and audit every maximal sewing needle fold in it."""
    eng = FoldEngine(m)
    out = []
    while True:
        ts = eng.turns()
        if not ts:
            break
        if strategy is not None:
            t = strategy.pick(ts)
        else:
            # prefer needle turns so that every available needle gets audited
            needles = [x for x in ts if {abs(y) for y in eng.chain(x.first)}
                       & {abs(y) for y in eng.chain(x.second)}]
            t = (needles or ts)[0]
        first = eng.J
        c1 = eng.chain(t.first)
        natural_edge = {abs(x) for x in c1}
        rec = eng.maximal_fold(t)
        if rec.kind.startswith("needle"):
            img = set()
            fm = None
            for st in eng.steps[first:]:
                fm = st.fold_map if fm is None else compose(st.fold_map, fm)
            for e in natural_edge:
                img.update(abs(x) for x in fm.image(e).edges)
            rep = _needle_audit(eng.h(), img, rec.kind)
            rep["fold"] = first
            out.append(rep)
    return out


# ---------------------------------------------------------------- covering rank data

def image_paths(fac: FoldFactorization) -> List[Dict[int, DecoratedPath]]:
    """Images of the natural domain edges in each T_j (T_0 subdivided)."""
    s = fac.source.domain
    if not fac.steps:
        return [{e: path_from_edges(s, (e,)) for e in s.edge_ids}]
    cur = dict(fac.subdivision.edge_images)
    out = [cur]
    for st in fac.steps:
        f = st.fold_map
        cur = {e: path_tighten(f.push_path(p)) for e, p in cur.items()}
        out.append(cur)
    return out


def kr_of(s: Splitting, p: DecoratedPath) -> int:
    return subgraph_label(s, p.edges, p.start).kurosh_rank


def covering_rank_data(fac: FoldFactorization) -> dict:
    imgs = image_paths(fac)
    kr = []
    for j, paths in enumerate(imgs):
        s = fac.simplicial_splitting(j)
        kr.append({e: kr_of(s, p) for e, p in sorted(paths.items())})
    jumps = []
    for j in range(1, len(kr)):
        for e in kr[j]:
            if kr[j][e] > kr[j - 1][e]:
                jumps.append((j, e))
    bound = derive_constants(fac.source.domain.context).jumping_bound \
        if fac.source.domain.context.max_edges >= 1 else None
    return {"kr": kr, "jumps": jumps, "total_jumps": len(jumps), "jumping_bound": bound,
            "within_bound": bound is None or len(jumps) <= bound}


# ---------------------------------------------------------------- step 1 processes

def covering_edge(m: GraphMap) -> Optional[int]:
    """A natural domain edge whose image crosses every codomain edge, if any."""
    allc = set(m.codomain.edge_ids)
    for e in sorted(m.edge_images):
        if {abs(x) for x in m.edge_images[e].edges} >= allc:
            return e
    return None


class Step1Strategy(FoldStrategy):
    """Alternate fold-to-increase-rank and fold-to-injection processes."""

    name = "step1"

    def run(self, eng: FoldEngine):
        s = eng.source.domain
        ctx = s.context
        consts = derive_constants(ctx)
        self.consts = consts
        paths = {e: path_from_edges(eng.t0, eng.corr[e]) for e in s.edge_ids}
        self.n_edges = len(s.edge_ids)
        self.paths = paths
        self.kr = {e: kr_of(eng.cur, p) for e, p in paths.items()}
        self.jumps = []
        self.covered_at = None
        while eng.turns():
            if any({abs(x) for x in p.edges} >= set(eng.ends) for p in paths.values()):
                self.covered_at = eng.J
                eng.log.append("covering reached at fold %d" % eng.J)
                break
            noninj = [e for e in sorted(paths) if eng.turns({abs(x) for x in paths[e].edges})]
            if noninj:
                self.process_two(eng, noninj[0])
            else:
                self.process_one(eng)
        self.step1_segments = len(eng.cert.segments)
        self.finish(eng)

    def advance(self, eng, st) -> bool:
        """Push the tracked images through the last fold; True if some rank jumped."""
        f = st.fold_map
        jumped = False
        for e in sorted(self.paths):
            self.paths[e] = path_tighten(f.push_path(self.paths[e]))
            k = kr_of(eng.cur, self.paths[e])
            if k > self.kr[e]:
                self.jumps.append((eng.J, e))
                jumped = True
            self.kr[e] = k
        return jumped

    def process_two(self, eng, i0):
        j0 = eng.J
        beta = {abs(x) for x in self.paths[i0].edges}
        outside = set(eng.ends) - beta
        eng.log.append("process-2 on edge %d at fold %d" % (i0, j0))
        if not any(eng.turns(beta)):
            return
        while True:
            ts = eng.turns(beta)
            if not ts:
                break
            eng.single_fold(ts[0])
            jumped = self.advance(eng, eng.steps[-1])
            beta = {abs(x) for x in self.paths[i0].edges}
            if jumped:
                break
        wit = prioritized_witness(eng, j0, eng.J, outside)
        wit["subforest_edge"] = i0
        eng.cert.segments.append(Segment("process-2", j0, eng.J, 2, wit))

    def process_one(self, eng):
        j0 = eng.J
        eng.log.append("process-1 at fold %d" % j0)
        while True:
            ts = eng.turns()
            if not ts:
                break
            eng.single_fold(ts[0])
            if self.advance(eng, eng.steps[-1]):
                break
        wit = process_one_witness(eng.splitting_at, [st.fold_map for st in eng.steps],
                                  j0, eng.J, self.n_edges)
        eng.cert.segments.append(Segment("process-1", j0, eng.J,
                                         self.consts.process_one_bound, wit))


def process_one_witness(get_splitting, step_maps, j0: int, m: int, n_edges: int) -> dict:
    """An edge of T_{M-1} crossed by the images of at most n_edges edges of T_J."""
    if m - 1 <= j0:
        return {"edge": None, "count": 1, "limit": n_edges, "ok": True}
    src = get_splitting(j0)
    acc = identity_map(src)
    for j in range(j0 + 1, m):
        acc = compose(step_maps[j - 1], acc)
    tgt = get_splitting(m - 1)
    best = None
    for e in tgt.edge_ids:
        c = sum(1 for p in acc.edge_images.values() if any(abs(x) == e for x in p.edges))
        if best is None or c < best[1]:
            best = (e, c)
    return {"edge": best[0], "count": best[1], "limit": n_edges, "ok": best[1] <= n_edges}


def run_step1_processes(m: GraphMap, cap: int = FOLD_CAP) -> dict:
    e = covering_edge(m)
    if e is not None:
        return {"outcome": "edge-found", "edge": e, "certificate": DiameterCertificate(),
                "factorization": None}
    strat = Step1Strategy()
    fac = factorize(m, strat, cap)
    consts = derive_constants(m.domain.context)
    step1 = DiameterCertificate(fac.certificate.segments[:strat.step1_segments])
    return {"outcome": "bounded", "edge": None, "certificate": step1,
            "factorization": fac, "jumps": list(strat.jumps), "covered_at": strat.covered_at,
            "total": step1.total, "bound": consts.delta1 - 1,
            "within_bound": step1.total <= consts.delta1 - 1,
            "jumps_within_bound": len(strat.jumps) <= consts.jumping_bound}


# ---------------------------------------------------------------- two over all

def two_over_all_check(m: GraphMap, n: int, certified_diameter: Optional[int] = None) -> dict:
    dom_ns = natural_structure(m.domain)
    cod_ns = natural_structure(m.codomain)
    firsts = {abs(c.path[0]): c.id for c in cod_ns.edges}
    profile = {}
    for ne in dom_ns.edges:
        p = path_tighten(m.push_path(path_from_edges(m.domain, ne.path)))
        counts = {c.id: 0 for c in cod_ns.edges}
        for x in p.edges:
            if abs(x) in firsts:
                counts[firsts[abs(x)]] += 1
        profile[ne.id] = min(counts.values())
    need = 2 ** (n - 1)
    good = sorted(e for e, c in profile.items() if c >= need)
    conclusion = len(good) >= 2 or (len(good) >= 1 and len(dom_ns.edges) == 1)
    delta = derive_constants(m.domain.context).delta3 if m.domain.context.max_edges >= 1 else None
    hyp = "verified" if (certified_diameter is not None and delta is not None
                         and certified_diameter >= n * delta) else "not-verifiable"
    return {"profile": profile, "required": need, "witnesses": good[:2] if conclusion else [],
            "conclusion_holds": conclusion, "hypothesis": hyp}


# ---------------------------------------------------------------- pullback graphs

@dataclass
class PullbackGraph:
    edges: Tuple[int, ...]
    components: List[Tuple[int, ...]]
    branched: List[Tuple[int, ...]]
    unbranched: List[Tuple[int, ...]]
    sharp_branched: int
    sharp_all: int
    bound: Optional[int]
    sections_ok: bool

    @property
    def within_bound(self) -> bool:
        return self.bound is None or self.sharp_branched <= self.bound


def pullback(m: GraphMap, e_sharp: int) -> PullbackGraph:
    """Pullback of the natural codomain edge containing e_sharp, for simplicial foldable m."""
    if not m.simplicial:
        raise FoldError("pullback needs a simplicial map")
    dom, cod = m.domain, m.codomain
    cns = natural_structure(cod)
    owner = cns.edge_of()
    target = owner[abs(e_sharp)]
    sharp_edges = set(abs(x) for x in [ne for ne in cns.edges if ne.id == target][0].path)
    cod_natural = set(cns.vertices)
    dom_natural = set(natural_structure(dom).vertices)
    cset = sorted(e for e, p in m.edge_images.items() if abs(p.edges[0]) in sharp_edges)
    parent = {e: e for e in cset}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    cs = set(cset)
    for v in dom.vertex_ids:
        ds = [d for d in dom.directions(v) if abs(d) in cs]
        interior = m.vertex_map[v] not in cod_natural
        for i, a in enumerate(ds):
            for b in ds[i + 1:]:
                pa, pb = m.image(a), m.image(b)
                if interior or (pa.decos[0], pa.edges[0]) == (pb.decos[0], pb.edges[0]):
                    parent[find(abs(a))] = find(abs(b))
    comps: Dict[int, List[int]] = {}
    for e in cset:
        comps.setdefault(find(e), []).append(e)
    comp_list = sorted(tuple(sorted(c)) for c in comps.values())
    branched, unbranched = [], []
    for c in comp_list:
        verts = set()
        for e in c:
            verts.add(dom.origin(e))
            verts.add(dom.terminus(e))
        (branched if verts & dom_natural else unbranched).append(c)

    def sharp(comps_sub):
        cnt: Dict[int, int] = {}
        for c in comps_sub:
            for e in c:
                t = abs(m.edge_images[e].edges[0])
                cnt[t] = cnt.get(t, 0) + 1
        return max(cnt.values(), default=0)

    sections_ok = True
    for c in unbranched:
        toks = sorted(abs(m.edge_images[e].edges[0]) for e in c)
        if toks != sorted(sharp_edges):
            sections_ok = False
    ctx = dom.context
    bound = 2 * ctx.max_edges if ctx.max_edges >= 1 else None
    return PullbackGraph(tuple(cset), comp_list, branched, unbranched, sharp(branched),
                         sharp(comp_list), bound, sections_ok)


def simplicial_model(m: GraphMap) -> GraphMap:
    """The subdivided simplicial version of a tight map with nontrivial edge images."""
    return FoldEngine(m).h()


# ---------------------------------------------------------------- independent replay

@dataclass
class VerifyResult:
    ok: bool
    failing: Optional[int]
    message: str


def replay(m: GraphMap, groups: Sequence[Tuple[int, int, int, int]]) -> FoldEngine:
    """Redo recorded (vertex, d1, d2, count) fold groups on a fresh engine."""
    eng = FoldEngine(m)
    for i, (v, d1, d2, n) in enumerate(groups):
        rec = eng.maximal_fold(Turn(v, d1, d2), limit=n)
        if rec.count != n:
            raise FoldError("group %d: replay performed %d folds, recorded %d" % (i, rec.count, n))
    return eng


def _check_segment(eng: FoldEngine, seg: Segment, consts, n_edges: int,
                   group_of: List[int]) -> Optional[str]:
    a, b = seg.start, seg.end
    if not 0 <= a <= b <= eng.J:
        return "segment range out of bounds"
    empty = a == b
    if seg.tag == "single-fold":
        if len({group_of[j] for j in range(a, b)}) > 1:
            return "folds from more than one maximal fold"
        return None if seg.bound == (0 if empty else 2) else "bound must be 2"
    if seg.tag in ("prioritized", "process-2", "injective-over-edge"):
        if seg.bound != (0 if empty else 2):
            return "bound must be 2"
        if empty:
            return None
        e = seg.witness.get("edge")
        if e is None:
            return "missing witness edge"
        for j in range(a, b + 1):
            if e not in eng.splitting_at(j).edge_map:
                return "witness edge %d missing from T_%d" % (e, j)
        types = {one_edge_type(eng.splitting_at(j), e) for j in range(a, b + 1)}
        return None if len(types) == 1 else "one-edge collapses differ"
    if seg.tag == "process-1":
        if seg.bound != consts.process_one_bound:
            return "bound must be %d" % consts.process_one_bound
        wit = process_one_witness(eng.splitting_at, [st.fold_map for st in eng.steps], a, b,
                                  n_edges)
        return None if wit["ok"] else "no edge with few preimages"
    if seg.tag == "edge-fiber":
        e = seg.witness.get("edge")
        fiber = sum(1 for p in _tokens_at(eng, a) if abs(p) == e)
        parts = seg.witness.get("parts", [])
        pos = a
        total = 0
        for tag, s0, s1, bd, w in parts:
            if s0 != pos:
                return "edge-fiber parts are not contiguous"
            err = _check_segment(eng, Segment(tag, s0, s1, bd, w), consts, n_edges, group_of)
            if err:
                return "edge-fiber part: " + err
            pos = s1
            total += bd
        if pos != b:
            return "edge-fiber parts do not cover the segment"
        if total != seg.bound:
            return "edge-fiber bound is not the sum of its parts"
        return None if seg.bound <= 4 * fiber else "bound exceeds 4 |fiber| = %d" % (4 * fiber)
    return "unknown tag %s" % seg.tag


def _tokens_at(eng: FoldEngine, j: int) -> List[int]:
    s = eng.splitting_at(j)
    if j == eng.J:
        return [eng.token(e) for e in s.edge_ids]
    h = eng.h()
    acc = identity_map(s)
    for st in eng.steps[j:]:
        acc = compose(st.fold_map, acc)
    acc = compose(h, acc)
    return [acc.edge_images[e].edges[0] for e in s.edge_ids]


def verify_replay(m: GraphMap, groups, segments: Sequence[Segment],
                  total: Optional[int] = None) -> VerifyResult:
    """Replay the folds and re-check every segment witness from scratch."""
    try:
        eng = replay(m, groups)
    except (FoldError, MapError, KeyError) as exc:
        return VerifyResult(False, None, "replay failed: %s" % exc)
    group_of = [st.group for st in eng.steps]
    ctx = m.domain.context
    consts = derive_constants(ctx)
    n_edges = len(m.domain.edges)
    pos = 0
    for i, seg in enumerate(segments):
        if seg.start != pos:
            return VerifyResult(False, i, "segment %d does not start where the last ended" % i)
        err = _check_segment(eng, seg, consts, n_edges, group_of)
        if err:
            return VerifyResult(False, i, "segment %d (%s): %s" % (i, seg.tag, err))
        pos = seg.end
    if pos != eng.J:
        return VerifyResult(False, len(segments), "segments do not cover all %d folds" % eng.J)
    if total is not None and total != sum(s.bound for s in segments):
        return VerifyResult(False, len(segments), "total is not the sum of segment bounds")
    return VerifyResult(True, None, "ok")
