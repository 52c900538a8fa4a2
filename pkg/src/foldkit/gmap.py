"""Tight maps between splittings, gates, composition and transition matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from foldkit.splitting import (
    DecoratedPath, Splitting, SplittingError, Word, crossing_number, direction_key, path_check,
    path_concat, path_from_edges, path_lmul, path_reverse, path_rmul, path_tighten,
    word_subst, format_path,
)


class MapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GraphMap:
    """Vertex images, images of positively oriented edges, and images of the
    domain vertex-group generators.  Atom generators default to themselves."""

    domain: Splitting
    codomain: Splitting
    vertex_map: Dict[int, int]
    edge_images: Dict[int, DecoratedPath]
    gen_images: Dict[str, Word] = field(default_factory=dict)

    def image(self, oe: int) -> DecoratedPath:
        p = self.edge_images[abs(oe)]
        return p if oe > 0 else path_reverse(p)

    def gen_image(self, g: str) -> Word:
        return self.gen_images.get(g, ((g, 1),))

    def push_word(self, w: Word) -> Word:
        return word_subst(w, self.gen_images)

    def push_path(self, p: DecoratedPath) -> DecoratedPath:
        """Untightened image of a path in the domain."""
        if p.trivial:
            v = self.vertex_map[p.start]
            return DecoratedPath(v, v, (), (self.push_word(p.decos[0]),))
        parts = []
        for i, e in enumerate(p.edges):
            q = self.image(e)
            parts.append(path_lmul(self.push_word(p.decos[i]), q))
        out = path_concat(*parts)
        return path_rmul(out, self.push_word(p.decos[-1]))

    def normal_gen_images(self) -> Dict[str, Word]:
        return {g: w for g, w in sorted(self.gen_images.items()) if w != ((g, 1),)}

    def same_as(self, other: "GraphMap") -> bool:
        """Token-exact equality of all data."""
        return (self.vertex_map == other.vertex_map
                and self.edge_images == other.edge_images
                and self.normal_gen_images() == other.normal_gen_images())

    def validate(self) -> List[str]:
        errs = []
        dom, cod = self.domain, self.codomain
        for v in dom.vertex_ids:
            if v not in self.vertex_map:
                errs.append("vertex %d has no image" % v)
                continue
            w = self.vertex_map[v]
            if w not in cod.labels:
                errs.append("vertex %d maps to unknown vertex %d" % (v, w))
                continue
            for g in dom.vertex_gens(v):
                try:
                    img = self.gen_image(g)
                    allowed = set(cod.vertex_gens(w))
                    bad = [x for x, _ in img if x not in allowed]
                except SplittingError as exc:
                    bad = [str(exc)]
                if bad:
                    errs.append("generator %s of vertex %d has image outside vertex %d" % (g, v, w))
                if not img:
                    errs.append("generator %s of vertex %d maps to the identity" % (g, v))
        if errs:
            return errs
        for e in dom.edges:
            p = self.edge_images.get(e.id)
            if p is None:
                errs.append("edge %d has no image" % e.id)
                continue
            if p.start != self.vertex_map[e.src] or p.end != self.vertex_map[e.dst]:
                errs.append("image of edge %d has wrong endpoints" % e.id)
                continue
            try:
                path_check(cod, p)
            except SplittingError as exc:
                errs.append("image of edge %d: %s" % (e.id, exc))
        return errs

    def check(self) -> "GraphMap":
        errs = self.validate()
        if errs:
            raise MapError("; ".join(errs))
        return self

    @cached_property
    def tight(self) -> bool:
        return all(path_tighten(p) == p for p in self.edge_images.values())

    @property
    def simplicial(self) -> bool:
        return all(len(p) == 1 for p in self.edge_images.values())

    @cached_property
    def foldable(self) -> bool:
        if not self.tight or any(p.trivial for p in self.edge_images.values()):
            return False
        return gates(self).foldable

    def __repr__(self):
        body = ", ".join("%d->%s" % (e, format_path(p)) for e, p in sorted(self.edge_images.items()))
        return "GraphMap(%s)" % body


def make_map(dom: Splitting, cod: Splitting, images: Dict[int, Sequence[int]],
             vertex_map: Optional[Dict[int, int]] = None,
             gen_images: Optional[Dict[str, Word]] = None) -> GraphMap:
    """Map from undecorated edge-path images; vertex images inferred where possible."""
    vm = dict(vertex_map or {})
    for e in dom.edges:
        img = tuple(images[e.id])
        if img:
            vm.setdefault(e.src, cod.origin(img[0]))
            vm.setdefault(e.dst, cod.terminus(img[-1]))
    eimg = {}
    for e in dom.edges:
        img = tuple(images[e.id])
        eimg[e.id] = path_from_edges(cod, img, start=vm.get(e.src))
    return GraphMap(dom, cod, vm, eimg, dict(gen_images or {})).check()


def identity_map(s: Splitting) -> GraphMap:
    return GraphMap(s, s, {v: v for v in s.vertex_ids},
                    {e.id: path_from_edges(s, (e.id,)) for e in s.edges})


def tighten(m: GraphMap) -> GraphMap:
    return GraphMap(m.domain, m.codomain, dict(m.vertex_map),
                    {e: path_tighten(p) for e, p in m.edge_images.items()},
                    dict(m.gen_images))


def compose(g: GraphMap, f: GraphMap) -> GraphMap:
    """g after f, tightened."""
    if f.codomain is not g.domain and f.codomain != g.domain:
        raise MapError("mismatched splittings")
    vm = {v: g.vertex_map[w] for v, w in f.vertex_map.items()}
    eimg = {e: path_tighten(g.push_path(p)) for e, p in f.edge_images.items()}
    gens = {}
    for v in f.domain.vertex_ids:
        for x in f.domain.vertex_gens(v):
            gens[x] = g.push_word(f.gen_image(x))
    return GraphMap(f.domain, g.codomain, vm, eimg, gens)


# ---------------------------------------------------------------- gates

def direction_image_key(m: GraphMap, d: int) -> Tuple[Word, int]:
    p = m.image(d)
    if p.trivial:
        raise MapError("derivative undefined: edge %d has trivial image" % abs(d))
    return (p.decos[0], p.edges[0])


@dataclass(frozen=True)
class GateStructure:
    gates: Dict[int, Tuple[Tuple[int, ...], ...]]
    labeled: frozenset

    def count(self, v: int) -> int:
        return len(self.gates[v])

    @property
    def foldable(self) -> bool:
        """Labeled vertices have infinitely many directions upstairs, hence >= 2 gates."""
        return all(len(gs) >= 2 or v in self.labeled for v, gs in self.gates.items())

    def one_gate_vertices(self) -> List[int]:
        return [v for v, gs in sorted(self.gates.items())
                if len(gs) < 2 and v not in self.labeled]


def gates(m: GraphMap, vertices: Optional[Sequence[int]] = None) -> GateStructure:
    dom = m.domain
    out = {}
    for v in (vertices if vertices is not None else dom.vertex_ids):
        groups: Dict[Tuple, List[int]] = {}
        for d in dom.directions(v):
            groups.setdefault(direction_image_key(m, d), []).append(d)
        gs = sorted((tuple(ds) for ds in groups.values()), key=lambda g: direction_key(g[0]))
        out[v] = tuple(gs)
    labeled = frozenset(v for v, lab in dom.vertices if not lab.trivial)
    return GateStructure(out, labeled)


@dataclass(frozen=True, order=True)
class Turn:
    vertex: int
    first: int
    second: int

    @property
    def degenerate(self) -> bool:
        return self.first == self.second


def make_turn(v: int, d1: int, d2: int) -> Turn:
    a, b = sorted((d1, d2), key=direction_key)
    return Turn(v, a, b)


def foldable_turns(m: GraphMap, edges: Optional[set] = None) -> List[Turn]:
    """Nondegenerate turns whose directions share a gate, optionally restricted to an edge set."""
    out = []
    for v in m.domain.vertex_ids:
        ds = [d for d in m.domain.directions(v) if edges is None or abs(d) in edges]
        keys = {d: direction_image_key(m, d) for d in ds}
        for i, a in enumerate(ds):
            for b in ds[i + 1:]:
                if keys[a] == keys[b]:
                    out.append(Turn(v, a, b))
    return out


# ---------------------------------------------------------------- crossings and matrices

@dataclass(frozen=True)
class TransitionMatrix:
    rows: Tuple[int, ...]
    cols: Tuple[int, ...]
    entries: Tuple[Tuple[int, ...], ...]

    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=object).reshape(len(self.rows), len(self.cols))

    def __matmul__(self, other: "TransitionMatrix") -> "TransitionMatrix":
        if self.cols != other.rows:
            raise MapError("incompatible transition matrix indices")
        n, k, m = len(self.rows), len(self.cols), len(other.cols)
        ent = tuple(tuple(sum(self.entries[i][t] * other.entries[t][j] for t in range(k))
                          for j in range(m)) for i in range(n))
        return TransitionMatrix(self.rows, other.cols, ent)

    def power(self, n: int) -> "TransitionMatrix":
        if self.rows != self.cols:
            raise MapError("power of a nonsquare matrix")
        out = TransitionMatrix(self.rows, self.cols, tuple(
            tuple(1 if i == j else 0 for j in range(len(self.cols))) for i in range(len(self.rows))))
        base = self
        while n:
            if n & 1:
                out = out @ base
            base = base @ base
            n >>= 1
        return out

    def column_sums(self) -> List[int]:
        return [sum(row[j] for row in self.entries) for j in range(len(self.cols))]

    def submatrix(self, idx: Sequence[int]) -> "TransitionMatrix":
        pos_r = [self.rows.index(i) for i in idx]
        pos_c = [self.cols.index(i) for i in idx]
        return TransitionMatrix(tuple(idx), tuple(idx),
                                tuple(tuple(self.entries[r][c] for c in pos_c) for r in pos_r))


def transition_matrix(m: GraphMap) -> TransitionMatrix:
    rows = tuple(m.codomain.edge_ids)
    cols = tuple(m.domain.edge_ids)
    ent = tuple(tuple(crossing_number(m.edge_images[c], r) for c in cols) for r in rows)
    return TransitionMatrix(rows, cols, ent)


def matrix(entries: Sequence[Sequence[int]], index: Optional[Sequence[int]] = None) -> TransitionMatrix:
    n = len(entries)
    idx = tuple(index) if index is not None else tuple(range(1, n + 1))
    return TransitionMatrix(idx, idx, tuple(tuple(int(x) for x in row) for row in entries))


@dataclass(frozen=True)
class SpectralReport:
    cls: str
    irreducible: bool
    aperiodic: bool
    period: int
    pf_eigenvalue: Optional[float]
    pf_vector: Optional[Tuple[float, ...]]
    bracket: Optional[Tuple[float, float]]


PF_TOL = 1e-9
PF_MAX_ITER = 10 ** 6


def _digraph(ent) -> nx.DiGraph:
    g = nx.DiGraph()
    n = len(ent)
    g.add_nodes_from(range(n))
    for i in range(n):
        for j in range(n):
            if ent[i][j]:
                g.add_edge(j, i)
    return g


def _period(g: nx.DiGraph, nodes) -> int:
    nodes = list(nodes)
    sub = g.subgraph(nodes)
    if sub.number_of_edges() == 0:
        return 0
    level = {nodes[0]: 0}
    todo = [nodes[0]]
    while todo:
        u = todo.pop()
        for v in sub.successors(u):
            if v not in level:
                level[v] = level[u] + 1
                todo.append(v)
    p = 0
    for u, v in sub.edges():
        p = math.gcd(p, level[u] + 1 - level[v])
    return abs(p)


def _pf_irreducible(a: np.ndarray) -> Tuple[float, np.ndarray, Tuple[float, float]]:
    """Power iteration on I + A (primitive), with Collatz-Wielandt brackets."""
    n = a.shape[0]
    b = a + np.eye(n)
    x = np.ones(n) / n
    lo, hi = 0.0, float("inf")
    for _ in range(PF_MAX_ITER):
        y = b @ x
        ratios = y / x
        lo, hi = float(ratios.min()) - 1.0, float(ratios.max()) - 1.0
        x = y / y.sum()
        if hi - lo < PF_TOL * 1e-3 * max(1.0, hi):
            break
    return (lo + hi) / 2.0, x, (lo, hi)


def spectral_analysis(mat: TransitionMatrix) -> SpectralReport:
    ent = mat.entries
    n = len(ent)
    if n == 0 or all(x == 0 for row in ent for x in row):
        return SpectralReport("zero", False, False, 0, None, None, None)
    g = _digraph(ent)
    irreducible = nx.is_strongly_connected(g) and g.number_of_edges() > 0
    a = np.array(ent, dtype=float)
    if irreducible:
        period = _period(g, range(n))
        lam, vec, br = _pf_irreducible(a)
        vec_t = tuple(float(v) for v in vec)
    else:
        period = 0
        lam, vec_t, br = 0.0, None, (0.0, 0.0)
        for comp in nx.strongly_connected_components(g):
            comp = sorted(comp)
            sub = a[np.ix_(comp, comp)]
            if not sub.any():
                continue
            l2, _, b2 = _pf_irreducible(sub)
            if l2 > lam:
                lam, br = l2, b2
    if lam < 0.5:
        cls = "zero"
    elif abs(lam - 1.0) <= PF_TOL:
        cls = "NEG"
        lam = 1.0
    else:
        cls = "EG"
    return SpectralReport(cls, irreducible, irreducible and period == 1, period,
                          lam if cls != "zero" else None, vec_t, br)
