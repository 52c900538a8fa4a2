"""Topological representatives, filtrations, train track checks and fold axes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx

from foldkit.context import derive_constants
from foldkit.fold import (
    FoldFactorization, FoldStrategy, RandomStrategy, factorize, is_isomorphism,
)
from foldkit.gmap import (
    GraphMap, SpectralReport, TransitionMatrix, compose, identity_map, spectral_analysis,
    transition_matrix,
)
from foldkit.splitting import (
    IDENTITY, CollapseMap, DecoratedPath, Splitting, Word, atom_gen, collapse,
    path_concat, path_from_edges, path_tighten, word_mul,
)

RTT2_LENGTH_CAP = 20
RTT2_COUNT_CAP = 20000
TT_DEPTH = 6


class TrainTrackError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AutoRep:
    """A self-map of a rose or thistle; atom_perm[i] = (j, decoration) for A_i -> deco A_j deco^-1."""

    base: Splitting
    map: GraphMap
    atom_perm: Tuple[Tuple[int, int, Word], ...] = ()

    def __post_init__(self):
        if self.map.domain != self.base or self.map.codomain != self.base:
            raise TrainTrackError("representative must be a self-map of its base")
        if not self.map.tight:
            raise TrainTrackError("representative is not tight")
        for i, j, _ in self.atom_perm:
            src = [v for v, lab in self.base.vertices if i in lab.atoms]
            dst = [v for v, lab in self.base.vertices if j in lab.atoms]
            if not src or not dst or self.map.vertex_map[src[0]] != dst[0]:
                raise TrainTrackError("atom permutation incompatible with vertex images")

    @property
    def matrix(self) -> TransitionMatrix:
        return transition_matrix(self.map)

    def iterate(self, k: int) -> GraphMap:
        acc = identity_map(self.base)
        for _ in range(k):
            acc = compose(self.map, acc)
        return acc


def make_rep(base: Splitting, m: GraphMap) -> AutoRep:
    perm = []
    for v, lab in base.vertices:
        for i in sorted(lab.atoms):
            w = m.gen_image(atom_gen(i))
            js = [int(g[1:]) for g, _ in w if g.startswith("A")]
            if len(js) != 1:
                raise TrainTrackError("atom %d does not map to a conjugate of an atom" % i)
            perm.append((i, js[0], IDENTITY))
    return AutoRep(base, m, tuple(perm))


# ---------------------------------------------------------------- induced maps

def _route_path(s: Splitting, cm: CollapseMap, x: int, y: int) -> DecoratedPath:
    r = cm.tree_route(x, y)
    return path_from_edges(s, r, start=x)


def induced_map(m: GraphMap, cd: CollapseMap, cc: CollapseMap) -> GraphMap:
    """The map between collapses induced by m, which must carry cd's forest into cc's."""
    dom = m.domain
    new_dom, new_cod = cd.target, cc.target
    root_of = {}
    for v in dom.vertex_ids:
        root_of[v] = min(u for u in dom.vertex_ids if cd.root(u) == cd.root(v))

    def push(p: DecoratedPath) -> DecoratedPath:
        return cc.push_path(path_tighten(m.push_path(p)))

    def around(u: int, core: DecoratedPath) -> DecoratedPath:
        r = root_of[u]
        a = _route_path(dom, cd, r, core.start)
        b = _route_path(dom, cd, core.end, root_of[core.end])
        return path_concat(a, core, b)

    vm = {cd.root(v): cc.root(m.vertex_map[v]) for v in dom.vertex_ids if root_of[v] == v}
    eimg = {}
    for e in new_dom.edges:
        p = around(dom.origin(e.id), path_from_edges(dom, (e.id,)))
        eimg[e.id] = push(p)
    gens: Dict[str, Word] = {}

    def loop_image(core: DecoratedPath) -> Word:
        q = push(around(core.start, core))
        if q.edges:
            raise TrainTrackError("collapsed forest is not invariant")
        return q.decos[0]

    for v in dom.vertex_ids:
        for g in dom.vertex_gens(v):
            core = DecoratedPath(v, v, (), (((g, 1),),))
            w = loop_image(core)
            if g.startswith("A"):
                gens[g] = w
            else:
                (new, _), = cd.gen_rename[g]
                gens[new] = w
    for eid, g in cd.nontree_gen.items():
        gens[g] = loop_image(path_from_edges(dom, (eid,)))
    return GraphMap(new_dom, new_cod, vm, eimg, gens)


def _collapse_rep(rep: AutoRep, sigma) -> Tuple[AutoRep, CollapseMap]:
    _, cm = collapse(rep.base, sigma)
    g = induced_map(rep.map, cm, cm)
    g = GraphMap(cm.target, cm.target, g.vertex_map, g.edge_images, g.gen_images)
    return make_rep(cm.target, g), cm


def collapse_pretrivial(rep: AutoRep) -> AutoRep:
    m = rep.map
    pre = {e for e, p in m.edge_images.items() if p.trivial}
    while True:
        more = {e for e, p in m.edge_images.items()
                if e not in pre and all(abs(x) in pre for x in p.edges)}
        if not more:
            break
        pre |= more
    if not pre:
        return rep
    if pre == set(rep.base.edge_ids):
        raise TrainTrackError("trivial representative: every edge is pretrivial")
    out, _ = _collapse_rep(rep, pre)
    return out


def pretrivial_forest(rep: AutoRep) -> List[int]:
    m = rep.map
    pre = {e for e, p in m.edge_images.items() if p.trivial}
    while True:
        more = {e for e, p in m.edge_images.items()
                if e not in pre and all(abs(x) in pre for x in p.edges)}
        if not more:
            return sorted(pre)
        pre |= more


# ---------------------------------------------------------------- filtrations

@dataclass
class Stratum:
    edges: Tuple[int, ...]
    cls: str
    block: TransitionMatrix
    spectral: SpectralReport
    period: int
    substrata: Tuple[Tuple[int, ...], ...]

    @property
    def expansion(self) -> Optional[float]:
        return self.spectral.pf_eigenvalue


@dataclass
class Filtration:
    strata: List[Stratum]
    matrix: TransitionMatrix

    def element(self, r: int) -> Tuple[int, ...]:
        """Edges of the r-th filtration element (T_0 empty)."""
        return tuple(sorted(e for s in self.strata[:r] for e in s.edges))

    @property
    def order(self) -> List[int]:
        return [e for s in self.strata for e in s.edges]

    def is_upper_triangular(self) -> bool:
        pos = {e: i for i, s in enumerate(self.strata) for e in s.edges}
        m = self.matrix
        for ri, r in enumerate(m.rows):
            for ci, c in enumerate(m.cols):
                if m.entries[ri][ci] and pos[r] > pos[c]:
                    return False
        return True

    def is_invariant(self, rep: AutoRep) -> bool:
        for r in range(len(self.strata) + 1):
            sub = set(self.element(r))
            for e in sub:
                if not all(abs(x) in sub for x in rep.map.edge_images[e].edges):
                    return False
        return True


def _substrata(block: TransitionMatrix, period: int) -> Tuple[Tuple[int, ...], ...]:
    idx = block.rows
    if period <= 1:
        return (tuple(idx),)
    succ = {c: [r for ri, r in enumerate(idx) if block.entries[ri][ci]]
            for ci, c in enumerate(idx)}
    level = {idx[0]: 0}
    todo = [idx[0]]
    while todo:
        u = todo.pop(0)
        for v in succ[u]:
            if v not in level:
                level[v] = level[u] + 1
                todo.append(v)
    groups = [[] for _ in range(period)]
    for e in idx:
        groups[level[e] % period].append(e)
    return tuple(tuple(sorted(g)) for g in groups)


def compute_filtration(rep: AutoRep) -> Filtration:
    mat = rep.matrix
    g = nx.DiGraph()
    g.add_nodes_from(mat.cols)
    for ri, r in enumerate(mat.rows):
        for ci, c in enumerate(mat.cols):
            if mat.entries[ri][ci]:
                g.add_edge(c, r)
    cond = nx.condensation(g)
    members = {n: tuple(sorted(cond.nodes[n]["members"])) for n in cond.nodes}
    order = list(nx.lexicographical_topological_sort(cond.reverse(copy=True),
                                                     key=lambda n: members[n][0]))
    strata = []
    for n in order:
        edges = members[n]
        block = mat.submatrix(edges)
        sp = spectral_analysis(block)
        cls = sp.cls
        period = sp.period
        if cls == "EG" and sp.aperiodic:
            cls = "EG-aperiodic"
        strata.append(Stratum(edges, cls, block, sp, period, _substrata(block, period)))
    return Filtration(strata, mat)


# ---------------------------------------------------------------- RTT

def _direction_image(m: GraphMap, key: Tuple[Word, int]) -> Tuple[Word, int]:
    g, d = key
    p = m.image(d)
    return (word_mul(m.push_word(g), p.decos[0]), p.edges[0])


def illegal_turns(rep: AutoRep) -> List[Tuple[int, int, int]]:
    """Turns (vertex, d1, d2) some iterate of whose direction images coincide."""
    m = rep.map
    s = rep.base
    n_dirs = 2 * len(s.edges)
    cap = n_dirs * n_dirs + 1
    out = []
    for v in s.vertex_ids:
        ds = s.directions(v)
        for i, a in enumerate(ds):
            for b in ds[i + 1:]:
                ka, kb = (IDENTITY, a), (IDENTITY, b)
                seen = set()
                for _ in range(cap):
                    if ka == kb:
                        out.append((v, a, b))
                        break
                    state = (ka[1], kb[1], ka[0] == kb[0])
                    if state in seen and ka[0] == IDENTITY and kb[0] == IDENTITY:
                        break
                    seen.add(state)
                    ka, kb = _direction_image(m, ka), _direction_image(m, kb)
    return out


def _path_turns(p: DecoratedPath):
    for i in range(len(p.edges) - 1):
        yield p.decos[i + 1], -p.edges[i], p.edges[i + 1]


def _lower_paths(s: Splitting, lower: set, starts: set, cap_len: int, cap_count: int):
    """Tight edge paths in the lower subgraph joining attaching points; (paths, truncated)."""
    out = []
    stack = [(v, ()) for v in sorted(starts, reverse=True)]
    while stack:
        v, path = stack.pop()
        if len(path) >= cap_len:
            continue
        for d in sorted(s.directions(v), reverse=True):
            if abs(d) not in lower or (path and d == -path[-1]):
                continue
            np_ = path + (d,)
            w = s.terminus(d)
            if w in starts:
                if len(out) >= cap_count:
                    return out, True
                out.append(np_)
            stack.append((w, np_))
    return out, False


def rtt_check(rep: AutoRep, filt: Filtration) -> List[dict]:
    m = rep.map
    s = rep.base
    illegal = {(v, a, b) for v, a, b in illegal_turns(rep)}
    illegal |= {(v, b, a) for v, a, b in illegal}
    reports = []
    for r, st in enumerate(filt.strata):
        if not st.cls.startswith("EG"):
            continue
        hr = set(st.edges)
        lower = set(filt.element(r))
        rep_r = {"stratum": r, "edges": list(st.edges)}
        bad = [e for e in st.edges
               if abs(m.edge_images[e].edges[0]) not in hr or abs(m.edge_images[e].edges[-1]) not in hr]
        rep_r["RTT-i"] = {"pass": not bad, "witness": bad[:1]}
        attach = set()
        for e in st.edges:
            attach.add(s.origin(e))
            attach.add(s.terminus(e))
        bad2 = None
        paths, truncated = _lower_paths(s, lower, attach, RTT2_LENGTH_CAP, RTT2_COUNT_CAP)
        for edges in paths:
            q = path_tighten(m.push_path(path_from_edges(s, edges)))
            if q.trivial and q.decos[0] == IDENTITY:
                bad2 = list(edges)
                break
        n_paths = len(paths)
        rep_r["RTT-ii"] = {"pass": bad2 is None, "witness": bad2, "paths": n_paths,
                           "length_cap": RTT2_LENGTH_CAP, "truncated": truncated}
        bad3 = None
        for e in st.edges:
            p = m.edge_images[e]
            for deco, a, b in _path_turns(p):
                if abs(a) in hr and abs(b) in hr and deco == IDENTITY:
                    v = s.origin(b)
                    if (v, a, b) in illegal:
                        bad3 = [e, a, b]
                        break
            if bad3:
                break
        rep_r["RTT-iii"] = {"pass": bad3 is None, "witness": bad3}
        reports.append(rep_r)
    return reports


def illegal_turn_set(rep: AutoRep) -> set:
    return {frozenset((a, b)) for _, a, b in illegal_turns(rep)}


# ---------------------------------------------------------------- penultimate collapse and tiles

def penultimate_collapse(rep: AutoRep, filt: Filtration) -> Tuple[AutoRep, CollapseMap]:
    if len(filt.strata) < 2:
        raise TrainTrackError("penultimate collapse needs at least two strata")
    lower = filt.element(len(filt.strata) - 1)
    return _collapse_rep(rep, lower)


def tiles(rep: AutoRep, substratum: Sequence[int], k: int, period: int = 1) -> Dict[int, DecoratedPath]:
    """k-tiles: tightened f^(period*k)-images of the substratum edges."""
    filt = compute_filtration(rep)
    owner = [s for s in filt.strata if set(substratum) <= set(s.edges)]
    if not owner or not owner[0].cls.startswith("EG"):
        raise TrainTrackError("tiles need an EG substratum")
    f = rep.iterate(period * k) if k else identity_map(rep.base)
    return {e: f.edge_images[e] for e in sorted(substratum)}


def contains_subpath(big: DecoratedPath, small: DecoratedPath) -> bool:
    n, k = len(big.edges), len(small.edges)
    for i in range(n - k + 1):
        if big.edges[i:i + k] == small.edges or big.edges[i:i + k] == tuple(
                -x for x in reversed(small.edges)):
            return True
    return False


def tile_nesting(rep: AutoRep, substratum: Sequence[int], k: int, period: int = 1) -> bool:
    """Each k-tile contains some (k-1)-tile."""
    prev = tiles(rep, substratum, k - 1, period)
    cur = tiles(rep, substratum, k, period)
    return all(any(contains_subpath(t, q) for q in prev.values()) for t in cur.values())


def tile_bijection(rep: AutoRep, filt: Filtration, k: int) -> bool:
    """Top-stratum k-tiles of rep, pushed through the penultimate collapse, are those of the quotient."""
    down, cm = penultimate_collapse(rep, filt)
    top = filt.strata[-1].edges
    up_k = rep.iterate(k) if k else identity_map(rep.base)
    down_k = down.iterate(k) if k else identity_map(down.base)
    pushed = {e: cm.push_path(up_k.edge_images[e]).edges for e in top}
    return pushed == {e: down_k.edge_images[e].edges for e in top}


def neg_top_isomorphism(rep: AutoRep, filt: Filtration) -> Optional[bool]:
    """For a NEG top stratum, whether the penultimate collapse induces an isomorphism; None otherwise."""
    if filt.strata[-1].cls != "NEG":
        return None
    down, _ = penultimate_collapse(rep, filt)
    return is_isomorphism(down.map)


# ---------------------------------------------------------------- fold axes

@dataclass
class FoldAxis:
    rep: AutoRep
    period: int
    factorization: FoldFactorization
    relabel: GraphMap
    first_return: GraphMap
    eg_aperiodic: bool
    expansion: float
    spectral: SpectralReport

    @property
    def splittings(self) -> List[Splitting]:
        return self.factorization.splittings

    def step_matrices(self) -> List[TransitionMatrix]:
        fac = self.factorization
        return [transition_matrix(fac.step_map(j)) for j in range(1, fac.fold_count + 1)]

    def period_matrix(self) -> TransitionMatrix:
        """Product of the fold and relabeling matrices over one period, from T_0 subdivided."""
        fac = self.factorization
        acc = transition_matrix(fac.subdivision)
        for mt in self.step_matrices():
            acc = mt @ acc
        return transition_matrix(self.relabel) @ acc

    def period_composite(self, n: int) -> GraphMap:
        """f^0_{pn} followed by the relabeling, built period by period."""
        fac = self.factorization
        acc = identity_map(self.rep.base)
        for _ in range(n):
            for f in fac.maps:
                acc = compose(f, acc)
            acc = compose(self.relabel, acc)
        return acc


def suspension_axis(rep: AutoRep, strategy: Optional[FoldStrategy] = None) -> FoldAxis:
    filt = compute_filtration(rep)
    if len(filt.strata) != 1:
        raise TrainTrackError("reducible representative: %d strata (%s)" % (
            len(filt.strata), ", ".join(x.cls for x in filt.strata)))
    st = filt.strata[0]
    if not st.cls.startswith("EG"):
        raise TrainTrackError("representative is %s with expansion 1; no EG axis" % st.cls)
    for r in rtt_check(rep, filt):
        for k in ("RTT-i", "RTT-ii", "RTT-iii"):
            if not r[k]["pass"]:
                raise TrainTrackError("%s fails: witness %s" % (k, r[k]["witness"]))
    fac = factorize(rep.map, strategy)
    if not fac.complete:
        raise TrainTrackError("fold factorization incomplete")
    if not is_isomorphism(fac.terminal):
        raise TrainTrackError("terminal map is not an isomorphism; map is not invertible")
    first = fac.composite()
    if not first.same_as(rep.map):
        raise TrainTrackError("first return map differs from the representative")
    mf = transition_matrix(first)
    sp = spectral_analysis(mf)
    return FoldAxis(rep, fac.fold_count, fac, fac.terminal, first, st.cls == "EG-aperiodic",
                    sp.pf_eigenvalue, sp)


def first_return_consistency(axis: FoldAxis, n_max: int = 5) -> List[bool]:
    """(MF)^n against the matrix of the n-period composite, and the step-matrix product."""
    mf = transition_matrix(axis.first_return)
    per = axis.period_matrix()
    out = []
    for n in range(1, n_max + 1):
        lhs = mf.power(n)
        comp = transition_matrix(axis.period_composite(n))
        prod = per.power(n) if per.rows == per.cols else None
        out.append(lhs == comp and (prod is None or prod == lhs))
    return out


def train_track_depth_check(axis: FoldAxis, depth: int = TT_DEPTH) -> bool:
    """Iterates of the first return map never cancel on edges."""
    mf = transition_matrix(axis.first_return)
    acc = identity_map(axis.rep.base)
    for k in range(1, depth + 1):
        acc = compose(axis.first_return, acc)
        sums = mf.power(k).column_sums()
        for j, e in enumerate(mf.cols):
            if len(acc.edge_images[e].edges) != sums[j]:
                return False
    return True


def theorem_a_upper_report(axis: FoldAxis, n_max: int) -> dict:
    if not axis.eg_aperiodic:
        raise TrainTrackError("axis is not EG-aperiodic")
    ctx = axis.rep.base.context
    delta = derive_constants(ctx).delta3
    lam = axis.expansion
    big_b = delta / math.log(2)
    mf = transition_matrix(axis.first_return)
    per_period = axis.factorization.certificate.total
    rows = []
    power = mf
    for n in range(1, n_max + 1):
        if n > 1:
            power = power @ mf
        nn = min(power.column_sums())
        ratio = math.log(nn) / n if nn > 0 else float("-inf")
        rows.append({"n": n, "d_upper": per_period * n, "d_upper_ok": per_period * n <= 2 * axis.period * n,
                     "N_n": nn, "ratio": ratio})
    converged = None
    if n_max >= 30:
        converged = abs(rows[29]["ratio"] - math.log(lam)) <= 0.05
    return {"period": axis.period, "lambda": lam, "log_lambda": math.log(lam), "delta": delta,
            "B": big_b, "bound": big_b * math.log(lam), "rows": rows, "converged_at_30": converged}


def lambda_independence(rep: AutoRep, seeds: Sequence[int] = (1, 2)) -> Tuple[float, ...]:
    lams = [suspension_axis(rep).expansion]
    for sd in seeds:
        lams.append(suspension_axis(rep, RandomStrategy(sd)).expansion)
    return tuple(lams)
