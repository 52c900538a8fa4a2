"""Metric splittings, Lipschitz data, candidate loops and the projection construction.

All lengths are Fractions; logarithms are taken only when reporting.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from foldkit.context import FactorContext, derive_constants
from foldkit.fold import factorize
from foldkit.gmap import GraphMap, direction_image_key, gates, make_map
from foldkit.splitting import (
    IDENTITY, DecoratedPath, Edge, Label, Splitting, Word, atom_gen, collapse,
    make_splitting, path_lmul, path_tighten, rose, word_inv, word_mul, word_reduce,
)

CANDIDATE_COUNT_CAP = 200000


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------- metric splittings

def metric(s: Splitting, lengths: Dict[int, object]) -> Splitting:
    return s.with_lengths({e: Fraction(x) for e, x in lengths.items()})


def is_grushko(s: Splitting) -> bool:
    return all(len(l.atoms) <= 1 and l.free_rank == 0 for _, l in s.vertices)


def check_metric(s: Splitting) -> None:
    for e in s.edges:
        if e.length is None or e.length <= 0:
            raise MetricError("edge %d needs a positive length" % e.id)
    if not is_grushko(s):
        raise MetricError("metric splittings must be Grushko")


def is_normalized(s: Splitting) -> bool:
    return s.total_length() == 1


def path_length(s: Splitting, p: DecoratedPath) -> Fraction:
    return sum((s.length(abs(e)) for e in p.edges), Fraction(0))


def speeds(m: GraphMap) -> Dict[int, Fraction]:
    out = {}
    for e in m.domain.edges:
        if e.length is None or e.length == 0:
            raise MetricError("zero-length edge %d" % e.id)
        out[e.id] = path_length(m.codomain, m.edge_images[e.id]) / e.length
    return out


def lipschitz_constant(m: GraphMap) -> Tuple[Fraction, Tuple[int, ...]]:
    sp = speeds(m)
    lip = max(sp.values())
    return lip, tuple(sorted(e for e, v in sp.items() if v == lip and v > 0))


# ---------------------------------------------------------------- loops

def cyclic_reduce(p: DecoratedPath) -> DecoratedPath:
    """Cyclically tightened loop, with the wrap decoration stored last."""
    edges = list(p.edges)
    if not edges:
        return DecoratedPath(p.start, p.start, (), (word_mul(p.decos[-1], p.decos[0]),))
    mids = [word_reduce(d) for d in p.decos[1:-1]] + [word_mul(p.decos[-1], p.decos[0])]
    changed = True
    while changed and edges:
        changed = False
        k = len(edges)
        for i in range(k):
            j = (i + 1) % k
            if k >= 2 and edges[j] == -edges[i] and mids[i] == IDENTITY:
                if k == 2:
                    edges, mids = [], [mids[j]]
                else:
                    joined = word_mul(mids[i - 1], mids[j])
                    keep = [x for x in range(k) if x not in (i, j)]
                    nm = {x: mids[x] for x in keep}
                    nm[(i - 1) % k] = joined
                    edges = [edges[x] for x in keep]
                    mids = [nm[x] for x in keep]
                changed = True
                break
    if not edges:
        return DecoratedPath(p.start, p.start, (), (mids[0],))
    return DecoratedPath(p.start, p.start, tuple(edges), (IDENTITY,) + tuple(mids))


def loop_length(s: Splitting, p: DecoratedPath) -> Fraction:
    return path_length(s, cyclic_reduce(p))


def _canonical_cycle(edges, mids):
    k = len(edges)
    forms = []
    inv_e = tuple(-x for x in reversed(edges))
    inv_m = tuple(word_inv(mids[k - 2 - i]) for i in range(k - 1)) + (word_inv(mids[k - 1]),)
    for e2, m2 in ((tuple(edges), tuple(mids)), (inv_e, inv_m)):
        for r in range(k):
            forms.append((e2[r:] + e2[:r], m2[r:] + m2[:r]))
    return min(forms, key=lambda f: (f[0], repr(f[1])))


def _simple_cycles_at(s: Splitting, v: int, cap: int) -> List[Tuple[int, ...]]:
    out = []
    stack = [(v, (), {v})]
    while stack:
        x, path, seen = stack.pop()
        if len(path) >= cap:
            continue
        for d in s.directions(x):
            if path and d == -path[-1]:
                continue
            y = s.terminus(d)
            if y == v:
                out.append(path + (d,))
            elif y not in seen:
                stack.append((y, path + (d,), seen | {y}))
    return out


def _arcs(s: Splitting, u: int, cap: int) -> List[Tuple[int, ...]]:
    out = []
    stack = [(u, (), {u})]
    while stack:
        x, path, seen = stack.pop()
        if len(path) >= cap:
            continue
        for d in s.directions(x):
            y = s.terminus(d)
            if y in seen:
                continue
            out.append(path + (d,))
            stack.append((y, path + (d,), seen | {y}))
    return out


def _verts(s: Splitting, edges) -> set:
    return {s.origin(e) for e in edges} | {s.terminus(e) for e in edges}


def candidate_loops(s: Splitting, cap: int) -> Tuple[List[DecoratedPath], bool]:
    """Candidate loops of at most cap edges: embedded circles, figure-eights, barbells.

    At an atom vertex the atom generator may stand in for a circle, giving the
    decorated analogues of these shapes.  Returns (loops, complete) where
    complete is False if the count cap cut the enumeration short.
    """
    atom = {v: ((atom_gen(min(l.atoms)), 1),) for v, l in s.vertices if l.atoms}
    # a petal at v is an embedded circle based at v, or the atom generator at v
    petals: Dict[int, List[Tuple[Tuple[int, ...], Word]]] = {}
    for v in s.vertex_ids:
        ps = [(c, IDENTITY) for c in _simple_cycles_at(s, v, cap)]
        if v in atom:
            ps.append(((), atom[v]))
        petals[v] = ps
    out = []
    seen = set()

    def emit(parts) -> bool:
        edges, mids = [], []
        lead = IDENTITY
        for es, g in parts:
            for e in es:
                edges.append(e)
                mids.append(IDENTITY)
            if mids:
                mids[-1] = word_mul(mids[-1], g)
            else:
                lead = word_mul(lead, g)
        if not edges or len(edges) > cap:
            return True
        mids[-1] = word_mul(mids[-1], lead)
        v0 = s.origin(edges[0])
        p = cyclic_reduce(DecoratedPath(v0, v0, tuple(edges), (IDENTITY,) + tuple(mids)))
        if not p.edges:
            return True
        key = _canonical_cycle(p.edges, p.decos[1:])
        if key in seen:
            return True
        seen.add(key)
        v1 = s.origin(p.edges[0])
        out.append(DecoratedPath(v1, v1, p.edges, p.decos))
        return len(out) < CANDIDATE_COUNT_CAP

    def part(pt, inverse=False):
        es, g = pt
        if inverse:
            return [(tuple(-e for e in reversed(es)), word_inv(g))]
        return [(es, g)]

    for v in s.vertex_ids:
        cyc = petals[v]
        for pt in cyc:
            if pt[0] and not emit(part(pt)):
                return out, False
        for i, p1 in enumerate(cyc):
            for p2 in cyc[i + 1:]:
                if not p1[0] and not p2[0]:
                    continue
                if p1[0] and p2[0] and _verts(s, p1[0]) & _verts(s, p2[0]) != {v}:
                    continue
                if {abs(e) for e in p1[0]} & {abs(e) for e in p2[0]}:
                    continue
                for inv in (False, True):
                    if not emit(part(p1) + part(p2, inv)):
                        return out, False
    for u in s.vertex_ids:
        for arc in _arcs(s, u, cap):
            w = s.terminus(arc[-1])
            inner = _verts(s, arc) - {u, w}
            back = tuple(-e for e in reversed(arc))
            for p1 in petals[u]:
                if _verts(s, p1[0]) & (inner | {w}):
                    continue
                for p2 in petals[w]:
                    if _verts(s, p2[0]) & (inner | {u}):
                        continue
                    if not emit(part(p1) + [(arc, IDENTITY)] + part(p2) + [(back, IDENTITY)]):
                        return out, False
    return out, True


@dataclass
class StretchReport:
    ratio: Fraction
    value: float
    witness: Optional[DecoratedPath]
    candidates: int
    candidate_complete: bool
    relative: bool


def stretch_factor(s: Splitting, t: Splitting, cap: Optional[int] = None,
                   marking: Optional[GraphMap] = None) -> StretchReport:
    """Max over candidate loops of l_T(f(loop)) / l_S(loop), as a lower bound for d_O."""
    check_metric(s)
    check_metric(t)
    if marking is None:
        if s.context != t.context or [(e.id, e.src, e.dst) for e in s.edges] != [
                (e.id, e.src, e.dst) for e in t.edges] or s.vertices != t.vertices:
            raise MetricError("unmarked pair: supply a marking map")
        marking = GraphMap(s, t, {v: v for v in s.vertex_ids},
                           {e.id: DecoratedPath(e.src, e.dst, (e.id,), (IDENTITY, IDENTITY))
                            for e in s.edges})
    if cap is None:
        cap = 2 * len(s.edges)
    loops, under_cap = candidate_loops(s, cap)
    best, wit = None, None
    for lp in loops:
        ls = loop_length(s, lp)
        if ls == 0:
            continue
        img = path_tighten(marking.push_path(lp))
        r = loop_length(t, img) / ls
        if best is None or r > best:
            best, wit = r, lp
    if best is None:
        raise MetricError("no loxodromic candidate loops")
    relative = any(l.atoms for _, l in s.vertices)
    complete = under_cap and cap >= 2 * len(s.edges)
    return StretchReport(best, math.log(best) if best > 0 else float("-inf"), wit,
                         len(loops), complete, relative)


# ---------------------------------------------------------------- optimality

@dataclass
class OptimalityReport:
    lip: Fraction
    tension: Tuple[int, ...]
    tension_gates: Dict[int, int]
    gates_ok: bool
    max_ratio: Fraction
    gap: Fraction
    optimal: bool
    candidate_complete: bool


def tension_gate_counts(m: GraphMap, tension: Sequence[int]) -> Dict[int, int]:
    """Number of gates formed by tension directions, at each vertex the tension forest meets."""
    ts = set(tension)
    out = {}
    for v in m.domain.vertex_ids:
        keys = {direction_image_key(m, d) for d in m.domain.directions(v) if abs(d) in ts}
        if keys:
            out[v] = len(keys)
    return out


def optimality_report(m: GraphMap, cap: Optional[int] = None) -> OptimalityReport:
    lip, tension = lipschitz_constant(m)
    counts = tension_gate_counts(m, tension)
    labeled = {v for v, l in m.domain.vertices if not l.trivial}
    gates_ok = all(c >= 2 or v in labeled for v, c in counts.items())
    st = stretch_factor(m.domain, m.codomain, cap, marking=m)
    optimal = gates_ok and st.ratio == lip
    return OptimalityReport(lip, tension, counts, gates_ok, st.ratio, lip - st.ratio, optimal,
                            st.candidate_complete)


# ---------------------------------------------------------------- the projection construction

@dataclass
class ClaimStep:
    vertex: int
    rho: Tuple[Tuple[Word, int], ...]
    trimmed: Dict[int, Tuple[Fraction, Fraction]]
    merged: Tuple[int, ...]
    complexity: Tuple[int, int]
    new_vertex_gates: int


@dataclass
class ClaimResult:
    source: GraphMap
    collapsed: Tuple[int, ...]
    u: Splitting
    g: GraphMap
    intervals: Dict[int, Tuple[Fraction, Fraction]]
    steps: List[ClaimStep]
    certificate: Dict[str, bool]

    @property
    def ok(self) -> bool:
        return all(self.certificate.values())


def _complexity(g: GraphMap) -> Tuple[int, int]:
    from foldkit.splitting import natural_structure
    return (len(natural_structure(g.domain).edges), len(gates(g).one_gate_vertices()))


def subpath_by_length(t: Splitting, p: DecoratedPath, a: Fraction, b: Fraction) -> DecoratedPath:
    """The subpath of p between T-length positions a and b (both at vertices)."""
    pos = Fraction(0)
    i0 = i1 = None
    if a == 0:
        i0 = 0
    for i, e in enumerate(p.edges):
        pos += t.length(abs(e))
        if pos == a:
            i0 = i + 1
        if pos == b:
            i1 = i + 1
    if b == 0:
        i1 = 0
    if i0 is None or i1 is None:
        raise MetricError("cut point is not at a vertex")
    return DecoratedPath(0, 0, p.edges[i0:i1], p.decos[i0:i1 + 1])


def _inner_equal(p: DecoratedPath, q: DecoratedPath) -> bool:
    return p.edges == q.edges and p.decos[1:-1] == q.decos[1:-1]


def claim_construction(f: GraphMap, check_optimal: bool = True) -> ClaimResult:
    s, t = f.domain, f.codomain
    check_metric(s)
    check_metric(t)
    if check_optimal:
        rep = optimality_report(f)
        if not rep.optimal:
            raise MetricError("input map is not optimal")
    lip_f, tension_f = lipschitz_constant(f)
    sp = speeds(f)
    zero = sorted(e for e, v in sp.items() if v == 0)
    if len(zero) == len(s.edges):
        raise MetricError("every edge has speed zero")
    # basis: collapse zero-speed edges
    if zero:
        from foldkit.traintrack import induced_map
        _, cd = collapse(s, zero)
        _, cc = collapse(t, [])
        g = induced_map(f, cd, cc)
        g = GraphMap(cd.target, t, g.vertex_map, g.edge_images, g.gen_images)
    else:
        g = f
    collapsed = list(zero)
    intervals = {e.id: (Fraction(0), e.length) for e in s.edges if e.id not in zero}
    steps: List[ClaimStep] = []
    comp = _complexity(g)
    decreasing = True
    new_gates_ok = True
    budget = 4 * len(s.edges) + 4
    while not gates(g).foldable:
        budget -= 1
        if budget < 0:
            raise MetricError("spray construction did not terminate")
        v = gates(g).one_gate_vertices()[0]
        g, step = _spray(g, v, intervals, sp, collapsed)
        new = _complexity(g)
        if not new < comp:
            decreasing = False
        comp = new
        step.complexity = new
        steps.append(step)
        if step.new_vertex_gates < 2 and g.domain.label(step.vertex).trivial:
            new_gates_ok = False
    u = g.domain
    cert = {}
    cert["a_subnormalized"] = u.total_length() <= s.total_length() <= 1 or u.total_length() <= 1
    okb = True
    for e, (lo, hi) in intervals.items():
        want = subpath_by_length(t, f.edge_images[e], sp[e] * lo, sp[e] * hi)
        if not _inner_equal(g.edge_images[e], want):
            okb = False
        if u.length(e) != hi - lo:
            okb = False
    cert["b_isometric_restriction"] = okb
    lip_g, tension_g = lipschitz_constant(g)
    cert["c_tension_preserved"] = tension_g == tension_f and all(
        intervals[e] == (Fraction(0), s.length(e)) for e in tension_f)
    cert["d_lipschitz_equal"] = lip_g == lip_f
    cert["e_complexity_decreases"] = decreasing
    cert["foldable"] = gates(g).foldable
    cert["new_vertex_gates"] = new_gates_ok
    return ClaimResult(f, tuple(sorted(collapsed)), u, g, intervals, steps, cert)


def _spray(g: GraphMap, v: int, intervals, sp, collapsed) -> Tuple[GraphMap, ClaimStep]:
    u, t = g.domain, g.codomain
    ds = u.directions(v)
    imgs = {d: g.image(d) for d in ds}
    toks = {d: imgs[d].tokens() for d in ds}
    r = 0
    while all(len(toks[d]) > r for d in ds) and len({toks[d][r] for d in ds}) == 1:
        r += 1
    if r == 0:
        raise MetricError("vertex %d is not a one-gate vertex" % v)
    rho = toks[ds[0]][:r]
    rho_len = sum((t.length(abs(e)) for _, e in rho), Fraction(0))
    cut: Dict[int, List[Fraction]] = {}
    lens = {e.id: e.length for e in u.edges}
    full = []
    for d in ds:
        e = abs(d)
        piece = rho_len / sp[e]
        cut.setdefault(e, [Fraction(0), Fraction(0)])
        cut[e][0 if d > 0 else 1] += piece
        if len(imgs[d].edges) == r:
            full.append(d)
    for e, (a, b) in cut.items():
        if a + b > lens[e] or (a + b == lens[e] and not any(abs(d) == e for d in full)):
            raise MetricError("spray overlaps itself on edge %d" % e)
    far = [u.terminus(d) for d in full]
    if len(set(far)) != len(far) or v in far:
        raise MetricError("spray reaches the same far vertex twice")
    # rebuild the domain: full edges removed, far vertices of full edges merged into v
    merge = {w: v for w in far}
    shift: Dict[int, Word] = {}
    for d in full:
        w = u.terminus(d)
        shift[w] = imgs[d].decos[r]
    labels = dict(u.labels)
    for w in far:
        lw = labels.pop(w)
        labels[v] = Label(labels[v].atoms | lw.atoms, labels[v].free_rank + lw.free_rank)
    full_ids = {abs(d) for d in full}
    edges = []
    eimg = {}
    new_int = {}
    for e in u.edges:
        if e.id in full_ids:
            continue
        a, b = cut.get(e.id, [Fraction(0), Fraction(0)])
        src, dst = merge.get(e.src, e.src), merge.get(e.dst, e.dst)
        p = g.edge_images[e.id]
        ra = r if a else 0
        rb = r if b else 0
        q = DecoratedPath(p.start, p.end, p.edges[ra:len(p.edges) - rb],
                          p.decos[ra:len(p.decos) - rb])
        if e.src in shift:
            q = path_lmul(shift[e.src], q)
        if e.dst in shift:
            q = DecoratedPath(q.start, q.end, q.edges, q.decos[:-1] + (
                word_mul(q.decos[-1], word_inv(shift[e.dst])),))
        edges.append(Edge(e.id, src, dst, e.length - a - b, e.parent))
        lo, hi = intervals[e.id]
        new_int[e.id] = (lo + a, hi - b)
        eimg[e.id] = q
    for e in full_ids:
        collapsed.append(e)
        del intervals[e]
    intervals.update(new_int)
    end_v = _walk(t, g.vertex_map[v], rho)
    vm = {x: g.vertex_map[x] for x in labels}
    vm[v] = end_v
    for e in list(eimg):
        q = eimg[e]
        ed = next(x for x in edges if x.id == e)
        eimg[e] = DecoratedPath(vm[ed.src], vm[ed.dst], q.edges, q.decos)
    gens = {}
    for x, lab in u.vertices:
        for gname in u.vertex_gens(x):
            w = g.gen_image(gname)
            if x in shift:
                w = word_mul(shift[x], w, word_inv(shift[x]))
            gens[gname] = w
    nu = Splitting(u.context, tuple(labels.items()), tuple(edges), u.subdivided)
    ng = GraphMap(nu, t, vm, eimg, gens).check()
    step = ClaimStep(v, rho, {e: tuple(c) for e, c in cut.items()}, tuple(sorted(far)),
                     (0, 0), gates(ng, [v]).count(v))
    return ng, step


def _walk(t: Splitting, v: int, rho) -> int:
    for _, e in rho:
        v = t.terminus(e)
    return v


# ---------------------------------------------------------------- instances

def optimal_instance(rng: random.Random, r: int = 2, s_loops: int = 1, unfold: bool = True,
                     blowup: bool = False) -> GraphMap:
    """An optimal map S -> R_n whose construction needs a spray step.

    U' has loops a_i at p, a bar c from p to q and loops b_j at q.  S is U'
    with the images at q conjugated by a word rho, or (without unfolding)
    with the bar image folded into the loops at q.
    """
    if r < 2:
        raise MetricError("need r >= 2")
    n = r + s_loops
    ctx = FactorContext(0, n)
    tl = {i: Fraction(rng.randint(1, 9)) for i in range(1, n + 1)}
    tot = sum(tl.values())
    t = rose(n, ctx).with_lengths({i: x / tot for i, x in tl.items()})
    p, q, p2 = 0, 1, 2
    verts = [(p, (), 0), (q, (), 0)]
    edges = []
    images = {}
    eid = 1
    a_ids = []
    moved = []
    for i in range(1, r + 1):
        at = p
        if blowup and i >= 2:
            at = p2
            moved.append(eid)
        edges.append((eid, at, at))
        images[eid] = [i]
        a_ids.append(eid)
        eid += 1
    c_id = eid
    eid += 1
    if unfold:
        k = rng.randint(1, 3)
        rho = []
        for j in range(k):
            choices = [x for x in range(2, r + 1)] + [-x for x in range(2, r + 1)]
            choices = [x for x in choices if not rho or x != -rho[-1]]
            rho.append(rng.choice(choices))
        if rho[-1] in (1, -1):
            raise AssertionError
        rho_bar = [-x for x in reversed(rho)]
        edges.append((c_id, p, q))
        images[c_id] = [1] + rho_bar
    else:
        edges.append((c_id, p, q))
        images[c_id] = [1]
    b_ids = []
    for j in range(1, s_loops + 1):
        edges.append((eid, q, q))
        x = r + j
        images[eid] = (rho + [x] + rho_bar) if unfold else [-1, x, 1]
        b_ids.append(eid)
        eid += 1
    z_id = None
    if blowup:
        verts.append((p2, (), 0))
        z_id = eid
        edges.append((z_id, p, p2))
        images[z_id] = []
        eid += 1
    dom = make_splitting(ctx, verts, [(e, a, b) for e, a, b in edges])
    vm = {v: 0 for v, _, _ in verts}
    m = make_map(dom, rose(n, ctx), images, vertex_map=vm)
    # speeds: a_1 uniquely fastest
    lt = {e: sum((t.length(abs(x)) for x in images[e]), Fraction(0)) for e in images}
    top = Fraction(rng.randint(4, 6))
    lengths = {}
    for e in dom.edge_ids:
        if e == z_id:
            lengths[e] = Fraction(rng.randint(1, 5), 10)
            continue
        s_e = top if e == a_ids[0] else top * Fraction(rng.randint(1, 8), 10)
        lengths[e] = lt[e] / s_e
    tot = sum(lengths.values())
    dom = dom.with_lengths({e: x / tot for e, x in lengths.items()})
    return GraphMap(dom, t, m.vertex_map, m.edge_images, {})


# ---------------------------------------------------------------- projection inequality

@dataclass
class ProjectionReport:
    d_o: float
    ratio: Fraction
    lhs_upper: int
    rhs: float
    status: str
    collapse_steps: int
    fold_certificate: int
    candidate_complete: bool


def projection_inequality_report(f: GraphMap, cap: Optional[int] = None) -> ProjectionReport:
    """d_FS upper bound from the construction and fold certificates, against the linear bound."""
    s, t = f.domain, f.codomain
    st = stretch_factor(s, t, cap, marking=f)
    ctx = s.context
    delta = derive_constants(ctx).delta3
    res = claim_construction(f, check_optimal=False)
    collapse_part = 1 if res.collapsed or res.steps else 0
    g = res.g
    total = 0
    if not _is_iso(g):
        fac = factorize(g)
        total = fac.certificate.total
    lhs = collapse_part + total
    rhs = (delta / math.log(2)) * st.value + 2 * delta + 1
    status = "confirmed" if lhs <= rhs else "inconclusive"
    return ProjectionReport(st.value, st.ratio, lhs, rhs, status, len(res.steps), total,
                            st.candidate_complete)


def _is_iso(g: GraphMap) -> bool:
    from foldkit.fold import is_isomorphism
    return is_isomorphism(g)
