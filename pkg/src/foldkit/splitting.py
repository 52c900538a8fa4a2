"""Quotient graphs of free splittings with composite vertex labels.

A splitting is stored as its finite quotient graph.  Each vertex carries a
label (atom set, free rank) standing for its stabilizer; edges have trivial
stabilizers.  Oriented edges are signed integers: +e runs from src to dst and
-e is its reverse.

Vertex group elements are reduced words over formal generators.  Atom i is
the generator "A{i}"; the free generators of the label at vertex v are
"F{v}_0", "F{v}_1", ...
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from foldkit.context import FactorContext

Word = Tuple[Tuple[str, int], ...]
IDENTITY: Word = ()


class SplittingError(ValueError):
    pass


# ---------------------------------------------------------------- words

def word_reduce(letters: Iterable[Tuple[str, int]]) -> Word:
    out: List[List] = []
    for g, k in letters:
        if k == 0:
            continue
        if out and out[-1][0] == g:
            out[-1][1] += k
            if out[-1][1] == 0:
                out.pop()
        else:
            out.append([g, k])
    return tuple((g, k) for g, k in out)


def word_mul(*words: Word) -> Word:
    letters = []
    for w in words:
        letters.extend(w)
    return word_reduce(letters)


def word_inv(w: Word) -> Word:
    return tuple((g, -k) for g, k in reversed(w))


def word_subst(w: Word, images: Dict[str, Word]) -> Word:
    """Apply a homomorphism given on generators; missing generators are fixed."""
    letters = []
    for g, k in w:
        img = images.get(g, ((g, 1),))
        if k < 0:
            img = word_inv(img)
        for _ in range(abs(k)):
            letters.extend(img)
    return word_reduce(letters)


def atom_gen(i: int) -> str:
    return "A%d" % i


def free_gen(v: int, j: int) -> str:
    return "F%d_%d" % (v, j)


def parse_gen(name: str) -> Tuple[str, int, int]:
    """("A", i, -1) for atoms, ("F", v, j) for free generators."""
    if name.startswith("A"):
        return ("A", int(name[1:]), -1)
    if name.startswith("F"):
        v, j = name[1:].split("_")
        return ("F", int(v), int(j))
    raise SplittingError("unknown generator %r" % name)


# ---------------------------------------------------------------- labels

@dataclass(frozen=True)
class Label:
    atoms: frozenset = frozenset()
    free_rank: int = 0

    def __post_init__(self):
        object.__setattr__(self, "atoms", frozenset(self.atoms))
        if self.free_rank < 0:
            raise SplittingError("negative free rank")

    @property
    def trivial(self) -> bool:
        return not self.atoms and self.free_rank == 0

    @property
    def kurosh_rank(self) -> int:
        return len(self.atoms) + self.free_rank

    def sort_key(self):
        return (tuple(sorted(self.atoms)), self.free_rank)

    def __repr__(self):
        return "Label(%s, %d)" % (sorted(self.atoms), self.free_rank)


TRIVIAL = Label()


@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    dst: int
    length: Optional[Fraction] = None
    parent: Optional[int] = None


# ---------------------------------------------------------------- splitting

@dataclass(frozen=True)
class Splitting:
    context: FactorContext
    vertices: Tuple[Tuple[int, Label], ...]
    edges: Tuple[Edge, ...]
    subdivided: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(sorted(self.vertices)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: e.id)))

    @cached_property
    def labels(self) -> Dict[int, Label]:
        return dict(self.vertices)

    @cached_property
    def edge_map(self) -> Dict[int, Edge]:
        return {e.id: e for e in self.edges}

    @property
    def vertex_ids(self) -> List[int]:
        return [v for v, _ in self.vertices]

    @property
    def edge_ids(self) -> List[int]:
        return [e.id for e in self.edges]

    def label(self, v: int) -> Label:
        return self.labels[v]

    def origin(self, oe: int) -> int:
        e = self.edge_map[abs(oe)]
        return e.src if oe > 0 else e.dst

    def terminus(self, oe: int) -> int:
        return self.origin(-oe)

    def length(self, e: int) -> Optional[Fraction]:
        return self.edge_map[abs(e)].length

    @cached_property
    def _directions(self) -> Dict[int, Tuple[int, ...]]:
        out: Dict[int, List[int]] = {v: [] for v in self.labels}
        for e in self.edges:
            out[e.src].append(e.id)
            out[e.dst].append(-e.id)
        return {v: tuple(sorted(ds, key=direction_key)) for v, ds in out.items()}

    def directions(self, v: int) -> Tuple[int, ...]:
        """Oriented edges leaving v, ordered by (edge id, sign)."""
        return self._directions[v]

    def valence(self, v: int) -> int:
        return len(self._directions[v])

    @property
    def betti(self) -> int:
        return len(self.edges) - len(self.vertices) + 1

    @property
    def total_free_rank(self) -> int:
        return sum(l.free_rank for _, l in self.vertices)

    def vertex_gens(self, v: int) -> List[str]:
        lab = self.labels[v]
        return [atom_gen(i) for i in sorted(lab.atoms)] + [
            free_gen(v, j) for j in range(lab.free_rank)]

    def is_connected(self) -> bool:
        if not self.vertices:
            return False
        start = self.vertices[0][0]
        seen = {start}
        todo = [start]
        while todo:
            v = todo.pop()
            for d in self._directions[v]:
                w = self.terminus(d)
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return len(seen) == len(self.vertices)

    def total_length(self) -> Fraction:
        return sum((e.length for e in self.edges), Fraction(0))

    def with_lengths(self, lengths: Dict[int, Fraction]) -> "Splitting":
        edges = tuple(Edge(e.id, e.src, e.dst, Fraction(lengths[e.id]), e.parent)
                      for e in self.edges)
        return Splitting(self.context, self.vertices, edges, self.subdivided)

    def normalized(self) -> "Splitting":
        tot = self.total_length()
        return self.with_lengths({e.id: e.length / tot for e in self.edges})

    def validate(self) -> List[str]:
        """All violated invariants, as messages; empty when valid."""
        errs = []
        ids = set(self.labels)
        for e in self.edges:
            if e.src not in ids or e.dst not in ids:
                errs.append("edge %d has unknown endpoint" % e.id)
            if e.id <= 0:
                errs.append("edge ids must be positive")
            if e.length is not None and e.length <= 0:
                errs.append("edge %d has nonpositive length" % e.id)
        if errs:
            return errs
        if not self.is_connected():
            errs.append("graph is disconnected")
        seen = set()
        for _, lab in self.vertices:
            if seen & lab.atoms:
                errs.append("atom sets overlap")
            seen |= lab.atoms
        if seen != set(range(1, self.context.atom_count + 1)):
            errs.append("atom sets do not partition 1..%d" % self.context.atom_count)
        if self.betti + self.total_free_rank != self.context.corank:
            errs.append("rank conservation fails: b1=%d, free rank=%d, corank=%d"
                        % (self.betti, self.total_free_rank, self.context.corank))
        for v, lab in self.vertices:
            if lab.trivial and self.valence(v) <= 1:
                errs.append("trivial vertex %d has valence %d" % (v, self.valence(v)))
            if lab.trivial and self.valence(v) == 2 and not self.subdivided:
                errs.append("unlabeled valence-2 vertex %d in unsubdivided splitting" % v)
        if self.context.max_edges >= 1:
            n = len(natural_structure(self).edges)
            if n > self.context.max_edges:
                errs.append("%d natural edges exceed max_edges %d" % (n, self.context.max_edges))
        return errs

    def check(self) -> "Splitting":
        errs = self.validate()
        if errs:
            raise SplittingError("; ".join(errs))
        return self


def direction_key(d: int):
    return (abs(d), 0 if d > 0 else 1)


def make_splitting(ctx: FactorContext, vertices, edges, subdivided=False) -> Splitting:
    """Build from plain data: vertices as (id, atoms, free_rank), edges as (id, src, dst[, length])."""
    vs = tuple((v, Label(frozenset(a), r)) for v, a, r in vertices)
    es = []
    for item in edges:
        eid, s, d = item[0], item[1], item[2]
        ln = Fraction(item[3]) if len(item) > 3 and item[3] is not None else None
        es.append(Edge(eid, s, d, ln))
    return Splitting(ctx, vs, tuple(es), subdivided)


def rose(n: int, ctx: Optional[FactorContext] = None) -> Splitting:
    ctx = ctx or FactorContext(0, n)
    return Splitting(ctx, ((0, TRIVIAL),), tuple(Edge(i, 0, 0) for i in range(1, n + 1)))


def thistle(k: int, l: int, ctx: Optional[FactorContext] = None) -> Splitting:
    """Central trivial vertex 0, atom leaves 1..k joined by prickles 1..k, petals k+1..k+l."""
    ctx = ctx or FactorContext(k, l)
    vs = [(0, TRIVIAL)] + [(i, Label(frozenset([i]), 0)) for i in range(1, k + 1)]
    es = [Edge(i, 0, i) for i in range(1, k + 1)]
    es += [Edge(k + j, 0, 0) for j in range(1, l + 1)]
    return Splitting(ctx, tuple(vs), tuple(es))


def barbell(ctx: Optional[FactorContext] = None) -> Splitting:
    """Loop 1 at vertex 0, loop 2 at vertex 1, bar 3 from 0 to 1."""
    ctx = ctx or FactorContext(0, 2)
    return Splitting(ctx, ((0, TRIVIAL), (1, TRIVIAL)),
                     (Edge(1, 0, 0), Edge(2, 1, 1), Edge(3, 0, 1)))


# ---------------------------------------------------------------- paths

@dataclass(frozen=True)
class DecoratedPath:
    """g0 e1 g1 ... ek gk; decos[i] lives in the group of the i-th vertex."""

    start: int
    end: int
    edges: Tuple[int, ...] = ()
    decos: Tuple[Word, ...] = ((),)

    def __post_init__(self):
        if len(self.decos) != len(self.edges) + 1:
            raise SplittingError("need one decoration per vertex of the path")

    def __len__(self):
        return len(self.edges)

    @property
    def trivial(self) -> bool:
        return not self.edges

    def tokens(self) -> Tuple[Tuple[Word, int], ...]:
        """(decoration before, edge) pairs for prefix comparison."""
        return tuple(zip(self.decos[:-1], self.edges))

    def is_plain(self) -> bool:
        return all(d == IDENTITY for d in self.decos)

    def __repr__(self):
        return "Path(%s)" % format_path(self)


def path_from_edges(s: Splitting, edges: Sequence[int], start: Optional[int] = None) -> DecoratedPath:
    edges = tuple(edges)
    if not edges:
        if start is None:
            raise SplittingError("trivial path needs a start vertex")
        return DecoratedPath(start, start)
    for a, b in zip(edges, edges[1:]):
        if s.terminus(a) != s.origin(b):
            raise SplittingError("edges %d, %d are not consecutive" % (a, b))
    return DecoratedPath(s.origin(edges[0]), s.terminus(edges[-1]), edges,
                         tuple(IDENTITY for _ in range(len(edges) + 1)))


def path_check(s: Splitting, p: DecoratedPath) -> None:
    v = p.start
    for i, e in enumerate(p.edges):
        _check_deco(s, v, p.decos[i])
        if s.origin(e) != v:
            raise SplittingError("path is not connected at edge %d" % e)
        v = s.terminus(e)
    _check_deco(s, v, p.decos[-1])
    if v != p.end:
        raise SplittingError("path end mismatch")


def _check_deco(s: Splitting, v: int, w: Word) -> None:
    allowed = set(s.vertex_gens(v))
    for g, _ in w:
        if g not in allowed:
            raise SplittingError("generator %s not in the group of vertex %d" % (g, v))


def path_reverse(p: DecoratedPath) -> DecoratedPath:
    return DecoratedPath(p.end, p.start, tuple(-e for e in reversed(p.edges)),
                         tuple(word_inv(d) for d in reversed(p.decos)))


def path_concat(*paths: DecoratedPath) -> DecoratedPath:
    out = paths[0]
    for q in paths[1:]:
        if out.end != q.start:
            raise SplittingError("cannot concatenate: %d != %d" % (out.end, q.start))
        decos = out.decos[:-1] + (word_mul(out.decos[-1], q.decos[0]),) + q.decos[1:]
        out = DecoratedPath(out.start, q.end, out.edges + q.edges, decos)
    return out


def path_lmul(g: Word, p: DecoratedPath) -> DecoratedPath:
    return DecoratedPath(p.start, p.end, p.edges, (word_mul(g, p.decos[0]),) + p.decos[1:])


def path_rmul(p: DecoratedPath, g: Word) -> DecoratedPath:
    return DecoratedPath(p.start, p.end, p.edges, p.decos[:-1] + (word_mul(p.decos[-1], g),))


def path_tighten(p: DecoratedPath) -> DecoratedPath:
    """Cancel e g e^-1 exactly when the decoration g between them is trivial."""
    oe: List[int] = []
    od: List[Word] = [word_reduce(p.decos[0])]
    for k, e in enumerate(p.edges):
        nxt = word_reduce(p.decos[k + 1])
        if oe and oe[-1] == -e and od[-1] == IDENTITY:
            oe.pop()
            od.pop()
            od[-1] = word_mul(od[-1], nxt)
        else:
            oe.append(e)
            od.append(nxt)
    return DecoratedPath(p.start, p.end, tuple(oe), tuple(od))


def is_tight(p: DecoratedPath) -> bool:
    return path_tighten(p) == p


def path_subst(p: DecoratedPath, images: Dict[str, Word]) -> DecoratedPath:
    return DecoratedPath(p.start, p.end, p.edges, tuple(word_subst(d, images) for d in p.decos))


def format_word(w: Word) -> str:
    return ".".join("%s^%d" % (g, k) if k != 1 else g for g, k in w)


def format_path(p: DecoratedPath) -> str:
    parts = []
    for i, e in enumerate(p.edges):
        if p.decos[i]:
            parts.append("[%s]" % format_word(p.decos[i]))
        parts.append("%+d" % e)
    if p.decos[-1]:
        parts.append("[%s]" % format_word(p.decos[-1]))
    return " ".join(parts) if parts else "<%d>" % p.start


def crossing_number(path: DecoratedPath, edge: int) -> int:
    return sum(1 for e in path.edges if abs(e) == abs(edge))


# ---------------------------------------------------------------- natural structure

@dataclass(frozen=True)
class NaturalEdge:
    id: int
    path: Tuple[int, ...]


@dataclass(frozen=True)
class NaturalStructure:
    vertices: Tuple[int, ...]
    edges: Tuple[NaturalEdge, ...]

    def edge_of(self) -> Dict[int, int]:
        """Subdivided edge id -> natural edge id."""
        return {abs(e): ne.id for ne in self.edges for e in ne.path}


def natural_vertex_set(s: Splitting) -> List[int]:
    nat = [v for v, lab in s.vertices if not lab.trivial or s.valence(v) != 2]
    if not nat and s.vertices:
        nat = [s.vertices[0][0]]
    return nat


def natural_structure(s: Splitting) -> NaturalStructure:
    nat = set(natural_vertex_set(s))
    used = set()
    nes = []
    for v in sorted(nat):
        for d in s.directions(v):
            if abs(d) in used:
                continue
            chain = [d]
            used.add(abs(d))
            w = s.terminus(d)
            while w not in nat:
                nxt = [x for x in s.directions(w) if x != -chain[-1]][0]
                chain.append(nxt)
                used.add(abs(nxt))
                w = s.terminus(nxt)
            m = min(abs(x) for x in chain)
            if -m in chain:
                chain = [-x for x in reversed(chain)]
            nes.append(NaturalEdge(m, tuple(chain)))
    nes.sort(key=lambda ne: ne.id)
    return NaturalStructure(tuple(sorted(nat)), tuple(nes))


def coarsen(s: Splitting) -> Tuple[Splitting, NaturalStructure]:
    """The natural splitting underlying s; natural edges keep their minimal subedge id."""
    ns = natural_structure(s)
    edges = []
    for ne in ns.edges:
        lens = [s.length(e) for e in ne.path]
        ln = sum(lens, Fraction(0)) if all(x is not None for x in lens) else None
        edges.append(Edge(ne.id, s.origin(ne.path[0]), s.terminus(ne.path[-1]), ln))
    vs = tuple((v, s.label(v)) for v in ns.vertices)
    return Splitting(s.context, vs, tuple(edges)), ns


def subdivide(s: Splitting, points: Dict[int, int]) -> Tuple[Splitting, Dict[int, Tuple[int, ...]]]:
    """Insert points[e] new vertices in edge e.

    The first piece keeps the id of e; fresh ids follow the current maximum.
    Returns the subdivided splitting and, for each edge id, its subedges in
    order from src to dst (all positively oriented).
    """
    next_e = max(s.edge_ids, default=0) + 1
    next_v = max(s.vertex_ids, default=-1) + 1
    vs = list(s.vertices)
    es = []
    corr = {}
    for e in s.edges:
        k = points.get(e.id, 0) + 1
        if k == 1:
            es.append(e)
            corr[e.id] = (e.id,)
            continue
        root = e.parent if e.parent is not None else e.id
        ln = e.length / k if e.length is not None else None
        chain_v = [e.src]
        for _ in range(k - 1):
            vs.append((next_v, TRIVIAL))
            chain_v.append(next_v)
            next_v += 1
        chain_v.append(e.dst)
        ids = [e.id] + list(range(next_e, next_e + k - 1))
        next_e += k - 1
        for i, eid in enumerate(ids):
            es.append(Edge(eid, chain_v[i], chain_v[i + 1], ln, root))
        corr[e.id] = tuple(ids)
    return Splitting(s.context, tuple(vs), tuple(es), True), corr


# ---------------------------------------------------------------- collapse

class CollapseMap:
    """Quotient by a subforest: each component of sigma becomes one vertex.

    A component's tree edges become trivial; each non-tree edge t becomes a
    new free generator, the loop (root -> o(t)) t (t(t) -> root) through the
    spanning tree.
    """

    def __init__(self, source: Splitting, sigma: Iterable[int]):
        self.source = source
        self.sigma = frozenset(abs(e) for e in sigma)
        unknown = self.sigma - set(source.edge_ids)
        if unknown:
            raise SplittingError("unknown edges %s" % sorted(unknown))
        if self.sigma and self.sigma == set(source.edge_ids):
            raise SplittingError("collapse to point")
        self.vertex_map: Dict[int, int] = {}
        self.tree_path: Dict[int, Tuple[int, ...]] = {}
        self.nontree_gen: Dict[int, str] = {}
        self.gen_rename: Dict[str, Word] = {}
        labels = {}
        seen = set()
        for v in source.vertex_ids:
            if v in seen:
                continue
            comp, tree, paths = self._component(v)
            seen.update(comp)
            root = min(comp)
            atoms = frozenset().union(*(source.label(x).atoms for x in comp))
            k = 0
            for x in sorted(comp):
                for j in range(source.label(x).free_rank):
                    self.gen_rename[free_gen(x, j)] = ((free_gen(root, k), 1),)
                    k += 1
            comp_edges = sorted({e.id for e in source.edges if e.id in self.sigma
                                 and e.src in comp})
            for eid in comp_edges:
                if eid not in tree:
                    self.nontree_gen[eid] = free_gen(root, k)
                    k += 1
            labels[root] = Label(atoms, k)
            for x in comp:
                self.vertex_map[x] = root
                self.tree_path[x] = paths[x]
        edges = tuple(e for e in source.edges if e.id not in self.sigma)
        edges = tuple(Edge(e.id, self.vertex_map[e.src], self.vertex_map[e.dst],
                           e.length, e.parent) for e in edges)
        self.target = Splitting(source.context, tuple(labels.items()), edges,
                                source.subdivided)

    def _component(self, v):
        s = self.source
        comp = {v}
        paths = {v: ()}
        tree = set()
        todo = deque([v])
        while todo:
            x = todo.popleft()
            for d in s.directions(x):
                if abs(d) not in self.sigma:
                    continue
                y = s.terminus(d)
                if y not in comp:
                    comp.add(y)
                    tree.add(abs(d))
                    paths[y] = paths[x] + (d,)
                    todo.append(y)
        return comp, tree, paths

    def push_word(self, w: Word) -> Word:
        return word_subst(w, self.gen_rename)

    def push_path(self, p: DecoratedPath) -> DecoratedPath:
        """Image of a path of the source in the quotient, tightened."""
        edges = []
        decos = [self.push_word(p.decos[0])]
        for i, e in enumerate(p.edges):
            if abs(e) in self.sigma:
                g = self.nontree_gen.get(abs(e))
                if g is not None:
                    decos[-1] = word_mul(decos[-1], ((g, 1 if e > 0 else -1),))
                decos[-1] = word_mul(decos[-1], self.push_word(p.decos[i + 1]))
            else:
                edges.append(e)
                decos.append(self.push_word(p.decos[i + 1]))
        q = DecoratedPath(self.vertex_map[p.start], self.vertex_map[p.end],
                          tuple(edges), tuple(decos))
        return path_tighten(q)

    def tree_route(self, x: int, y: int) -> Tuple[int, ...]:
        """Edge path inside sigma from x to y through the spanning tree."""
        a, b = self.tree_path[x], self.tree_path[y]
        i = 0
        while i < min(len(a), len(b)) and a[i] == b[i]:
            i += 1
        return tuple(-e for e in reversed(a[i:])) + b[i:]

    def root(self, x: int) -> int:
        return self.vertex_map[x]


def collapse(s: Splitting, sigma: Iterable[int]) -> Tuple[Splitting, CollapseMap]:
    cm = CollapseMap(s, sigma)
    return cm.target, cm


# ---------------------------------------------------------------- free factor systems

@dataclass(frozen=True)
class FreeFactorSystem:
    labels: Tuple[Label, ...] = ()
    full: bool = False

    def __post_init__(self):
        object.__setattr__(self, "labels",
                           tuple(sorted(self.labels, key=lambda l: l.sort_key())))

    def kurosh_total(self) -> int:
        return sum(l.kurosh_rank for l in self.labels)


def free_factor_support(s: Splitting, tau: Iterable[int]) -> FreeFactorSystem:
    tau = set(abs(e) for e in tau)
    if tau and tau == set(s.edge_ids):
        return FreeFactorSystem((), True)
    t, _ = collapse(s, tau)
    return FreeFactorSystem(tuple(l for _, l in t.vertices if not l.trivial))


def ffs(s: Splitting) -> FreeFactorSystem:
    return FreeFactorSystem(tuple(l for _, l in s.vertices if not l.trivial))


def nesting_leq(f1: FreeFactorSystem, f2: FreeFactorSystem) -> str:
    """Tri-state test of f1 nested in f2 from labels alone: 'yes', 'no' or 'unknown'."""
    if f2.full:
        return "yes"
    if f1.full:
        return "no"
    targets = list(f2.labels)
    found_sound = False
    found_any = False

    def search(i, load_kr, load_count, sound):
        nonlocal found_sound, found_any
        if found_sound:
            return
        if i == len(f1.labels):
            found_any = True
            if sound:
                found_sound = True
            return
        lab = f1.labels[i]
        for j, t in enumerate(targets):
            if not lab.atoms <= t.atoms:
                continue
            if load_kr[j] + lab.kurosh_rank > t.kurosh_rank:
                continue
            load_kr[j] += lab.kurosh_rank
            load_count[j] += 1
            ok = sound and (lab.free_rank == 0 or (lab == t and load_count[j] == 1))
            search(i + 1, load_kr, load_count, ok)
            load_kr[j] -= lab.kurosh_rank
            load_count[j] -= 1

    search(0, [0] * len(targets), [0] * len(targets), True)
    if found_sound:
        return "yes"
    if found_any:
        return "unknown"
    return "no"


# ---------------------------------------------------------------- covering forests

@dataclass(frozen=True)
class CoveringForest:
    edges: frozenset
    covers: bool


def covering_forest(s: Splitting, alpha: DecoratedPath) -> CoveringForest:
    es = frozenset(abs(e) for e in alpha.edges)
    return CoveringForest(es, es == frozenset(s.edge_ids))


def subgraph_label(s: Splitting, edges: Iterable[int], base: int) -> Label:
    """Label of the collapse of the component of the subgraph containing vertex base."""
    edges = set(abs(e) for e in edges)
    comp = {base}
    todo = [base]
    used = set()
    while todo:
        x = todo.pop()
        for d in s.directions(x):
            if abs(d) in edges:
                used.add(abs(d))
                y = s.terminus(d)
                if y not in comp:
                    comp.add(y)
                    todo.append(y)
    atoms = frozenset().union(*(s.label(x).atoms for x in comp))
    fr = sum(s.label(x).free_rank for x in comp) + len(used) - len(comp) + 1
    return Label(atoms, fr)
