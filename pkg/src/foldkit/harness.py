"""Seeded generators and the property-suite runner."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional

from foldkit.context import FactorContext
from foldkit.fold import (
    EdgeFiberStrategy, FoldEngine, FoldError, PrioritizeStrategy, covering_edge, covering_rank_data,
    factorize, needle_audits, pullback, run_step1_processes, verify_replay,
)
from foldkit.gmap import GraphMap, compose, gates, make_map, transition_matrix
from foldkit.splitting import (
    Edge, Label, Splitting, SplittingError, atom_gen, collapse, rose, thistle,
)

RETRIES = 64


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenSpec:
    context: FactorContext
    kind: str
    seed: int
    size: int = 3


# ---------------------------------------------------------------- splittings

def base_splitting(ctx: FactorContext) -> Splitting:
    if ctx.atom_count == 0:
        return rose(ctx.corank, ctx)
    return thistle(ctx.atom_count, ctx.corank, ctx)


def _relabel(s: Splitting, vertices, edges) -> Splitting:
    return Splitting(s.context, tuple(vertices), tuple(edges))


def _blowup(s: Splitting, rng: random.Random) -> Optional[Splitting]:
    v = rng.choice(s.vertex_ids)
    lab = s.label(v)
    new_v = max(s.vertex_ids) + 1
    new_e = max(s.edge_ids) + 1
    vs = dict(s.labels)
    es = list(s.edges)
    move = rng.random()
    if lab.free_rank > 0 and move < 0.4:
        vs[v] = Label(lab.atoms, lab.free_rank - 1)
        es.append(Edge(new_e, v, v))
    elif len(lab.atoms) + lab.free_rank >= 2 and lab.atoms and move < 0.7:
        a = rng.choice(sorted(lab.atoms))
        vs[v] = Label(lab.atoms - {a}, lab.free_rank)
        vs[new_v] = Label(frozenset([a]), 0)
        es.append(Edge(new_e, v, new_v))
    else:
        ds = list(s.directions(v))
        if len(ds) < 4 and not (lab.atoms or lab.free_rank):
            return None
        rng.shuffle(ds)
        k = rng.randint(2, max(2, len(ds) - 1)) if len(ds) >= 3 else len(ds)
        moved = set(ds[:k])
        if lab.trivial and (len(ds) - k) < 2:
            return None
        vs[new_v] = Label(frozenset(), 0)
        new_es = []
        for e in es:
            src, dst = e.src, e.dst
            if e.id in moved and src == v:
                src = new_v
            if -e.id in moved and dst == v:
                dst = new_v
            new_es.append(Edge(e.id, src, dst))
        new_es.append(Edge(new_e, v, new_v))
        es = new_es
    t = _relabel(s, sorted(vs.items()), es)
    return t if not t.validate() else None


def _collapse_move(s: Splitting, rng: random.Random) -> Optional[Splitting]:
    e = rng.choice(s.edge_ids)
    try:
        t, _ = collapse(s, [e])
    except SplittingError:
        return None
    return t if not t.validate() else None


def random_splitting(ctx: FactorContext, rng: random.Random, moves: int = 4) -> Splitting:
    s = base_splitting(ctx)
    for _ in range(moves):
        for _ in range(RETRIES):
            t = _blowup(s, rng) if rng.random() < 0.6 else _collapse_move(s, rng)
            if t is not None:
                s = t
                break
    s.check()
    return s


# ---------------------------------------------------------------- automorphisms

def _compose_words(outer: Dict[int, List[int]], inner: Dict[int, List[int]]) -> Dict[int, List[int]]:
    """(outer o inner)(e) = outer applied letterwise to inner(e); positive words only."""
    out = {}
    for e, w in inner.items():
        img = []
        for x in w:
            img.extend(outer[x])
        out[e] = img
    return out


def positive_auto_words(ctx: FactorContext, rng: random.Random, moves: int,
                        petals_only_moves: Optional[List[int]] = None):
    """Edge images and atom permutation of a product of elementary positive moves."""
    a, c = ctx.atom_count, ctx.corank
    petals = list(range(a + 1, a + c + 1))
    words = {e: [e] for e in range(1, a + c + 1)}
    perm = {i: i for i in range(1, a + 1)}
    for _ in range(moves):
        r = rng.random()
        if a >= 2 and r < 0.2:
            i, j = rng.sample(range(1, a + 1), 2)
            sw = {e: [e] for e in words}
            sw[i], sw[j] = [j], [i]
            words = _compose_words(sw, words)
            perm = {x: (j if y == i else i if y == j else y) for x, y in perm.items()}
        elif len(petals) >= 2:
            pool = petals_only_moves if petals_only_moves is not None else petals
            i = rng.choice(pool)
            j = rng.choice([p for p in petals if p != i])
            mv = {e: [e] for e in words}
            mv[i] = [i, j] if rng.random() < 0.5 else [j, i]
            words = _compose_words(words, mv)
        elif petals and c == 1 and a >= 2:
            continue
    return words, perm


def auto_map(ctx: FactorContext, words: Dict[int, List[int]], perm: Dict[int, int]) -> GraphMap:
    base = base_splitting(ctx)
    gens = {atom_gen(i): ((atom_gen(j), 1),) for i, j in perm.items()}
    vm = {0: 0}
    vm.update({i: j for i, j in perm.items()})
    return make_map(base, base, words, vertex_map=vm, gen_images=gens)


def random_positive_auto(ctx: FactorContext, rng: random.Random, moves: int = 3) -> GraphMap:
    words, perm = positive_auto_words(ctx, rng, moves)
    return auto_map(ctx, words, perm)


def random_foldable_map(ctx: FactorContext, rng: random.Random, size: int = 3) -> GraphMap:
    """Iterate of a positive automorphism, sometimes followed by a collapse of the codomain."""
    for _ in range(RETRIES):
        f = random_positive_auto(ctx, rng, size)
        k = rng.randint(1, 2)
        m = f
        for _ in range(k - 1):
            m = compose(f, m)
        if rng.random() < 0.3:
            cod = m.codomain
            cands = [e for e in cod.edge_ids if cod.origin(e) != cod.terminus(e)]
            if cands:
                from foldkit.traintrack import induced_map
                _, cc = collapse(cod, [rng.choice(cands)])
                idm = collapse(m.domain, [])[1]
                try:
                    g = induced_map(m, idm, cc)
                    g = GraphMap(m.domain, cc.target, g.vertex_map, g.edge_images, g.gen_images)
                except Exception:
                    continue
                m = g
        if any(p.trivial for p in m.edge_images.values()):
            continue
        if m.tight and m.foldable and not m.validate():
            return m
    raise GenerationError("retry budget exhausted")


def random_needle_map(ctx: FactorContext, rng: random.Random, size: int = 2) -> GraphMap:
    """A positive automorphism followed by a conjugation move e_i -> e_j e_i e_j^-1 on petals."""
    a, c = ctx.atom_count, ctx.corank
    petals = list(range(a + 1, a + c + 1))
    if len(petals) < 2:
        raise GenerationError("needle maps need two petals")
    for _ in range(RETRIES):
        words, perm = positive_auto_words(ctx, rng, size)
        i, j = rng.sample(petals, 2)
        conj = {e: [e] for e in words}
        conj[i] = [j, i, -j]
        out = {}
        for e, w in words.items():
            img = []
            for x in w:
                img.extend(conj[x] if x > 0 else [-y for y in reversed(conj[-x])])
            red = []
            for x in img:
                if red and red[-1] == -x:
                    red.pop()
                else:
                    red.append(x)
            out[e] = red
        if any(not w for w in out.values()):
            continue
        try:
            m = auto_map(ctx, out, perm)
        except SplittingError:
            continue
        if m.tight and m.foldable:
            return m
    raise GenerationError("retry budget exhausted")


def generate(spec: GenSpec):
    rng = random.Random(spec.seed)
    if spec.kind == "random_splitting":
        return random_splitting(spec.context, rng, spec.size)
    if spec.kind == "random_positive_auto":
        return random_positive_auto(spec.context, rng, spec.size)
    if spec.kind == "random_foldable_map":
        return random_foldable_map(spec.context, rng, spec.size)
    if spec.kind == "random_needle_map":
        return random_needle_map(spec.context, rng, spec.size)
    raise GenerationError("unknown generator kind %s" % spec.kind)


def random_step1_instance(rng: random.Random) -> GraphMap:
    """A positive automorphism none of whose natural edge images crosses every edge."""
    ctxs = [FactorContext(0, 3), FactorContext(0, 4), FactorContext(0, 5),
            FactorContext(1, 2), FactorContext(2, 2)]
    for _ in range(RETRIES):
        ctx = rng.choice(ctxs)
        m = random_positive_auto(ctx, rng, rng.randint(1, 4))
        if covering_edge(m) is None:
            return m
    raise GenerationError("retry budget exhausted")


def random_eg_rep(rng: random.Random, ctx: Optional[FactorContext] = None, max_length: int = 8):
    """An irreducible EG-aperiodic positive automorphism of a rose, as an AutoRep."""
    from foldkit.traintrack import compute_filtration, make_rep
    for _ in range(RETRIES):
        c = ctx or FactorContext(0, rng.randint(2, 3))
        m = random_positive_auto(c, rng, rng.randint(2, 5))
        if sum(len(p) for p in m.edge_images.values()) > max_length:
            continue
        rep = make_rep(m.domain, m)
        filt = compute_filtration(rep)
        if len(filt.strata) == 1 and filt.strata[0].cls == "EG-aperiodic":
            return rep
    raise GenerationError("retry budget exhausted")


def random_two_stratum_rep(rng: random.Random, top: str = "EG", max_length: int = 12):
    """A rose automorphism whose filtration has at least two strata, with top NEG or EG."""
    from foldkit.traintrack import compute_filtration, make_rep
    for _ in range(RETRIES):
        # an EG top stratum needs at least two edges
        n = rng.randint(2, 4) if top == "NEG" else rng.randint(3, 4)
        ctx = FactorContext(0, n)
        k = rng.randint(1, n - 1) if top == "NEG" else rng.randint(1, n - 2)
        lower = list(range(1, k + 1))
        upper = list(range(k + 1, n + 1))
        words = {e: [e] for e in range(1, n + 1)}
        for _ in range(rng.randint(1, 6)):
            if rng.random() < 0.3 and len(lower) >= 2:
                i, j = rng.sample(lower, 2)
            else:
                i = rng.choice(upper)
                pool = [p for p in range(1, n + 1) if p != i]
                if top == "NEG":
                    pool = lower
                j = rng.choice(pool)
            mv = {e: [e] for e in words}
            mv[i] = [i, j] if rng.random() < 0.5 else [j, i]
            words = _compose_words(words, mv)
        if sum(len(w) for w in words.values()) > max_length:
            continue
        m = auto_map(ctx, words, {})
        rep = make_rep(m.domain, m)
        filt = compute_filtration(rep)
        if len(filt.strata) < 2:
            continue
        cls = filt.strata[-1].cls
        if (top == "NEG" and cls == "NEG") or (top == "EG" and cls.startswith("EG")):
            return rep
    raise GenerationError("retry budget exhausted")


ROUND_TRIP_CONTEXTS = [FactorContext(0, c) for c in range(2, 6)] + [
    FactorContext(a, c) for a in (1, 2) for c in (1, 2)]


# ---------------------------------------------------------------- properties

def _prop_round_trip(rng):
    ctx = rng.choice(ROUND_TRIP_CONTEXTS)
    m = random_positive_auto(ctx, rng, rng.randint(1, 5))
    fac = factorize(m)
    return fac.round_trip() and fac.terminal_isomorphism(), {"folds": fac.fold_count}


def factorization_matrix_product(fac):
    acc = transition_matrix(fac.subdivision) if fac.steps else None
    if acc is None:
        return transition_matrix(fac.terminal)
    for j in range(1, fac.fold_count + 1):
        acc = transition_matrix(fac.step_map(j)) @ acc
    return transition_matrix(fac.terminal) @ acc


def _prop_multiplicativity(rng):
    ctx = rng.choice(ROUND_TRIP_CONTEXTS)
    m = random_positive_auto(ctx, rng, rng.randint(1, 5))
    fac = factorize(m)
    ok = factorization_matrix_product(fac) == transition_matrix(m)
    # every partial composite as well
    mats = [transition_matrix(f) for f in fac.maps]
    acc = None
    for j, f in enumerate(fac.maps):
        acc = mats[j] if acc is None else mats[j] @ acc
    if fac.maps:
        ok = ok and transition_matrix(fac.terminal) @ acc == transition_matrix(m)
    return ok, {"folds": fac.fold_count}


def _prop_rank_conservation(rng):
    ctx = rng.choice(ROUND_TRIP_CONTEXTS)
    if rng.random() < 0.5:
        m = random_positive_auto(ctx, rng, rng.randint(1, 4))
        eng = FoldEngine(m)
        steps = 0
        while eng.turns() and steps < 8:
            eng.maximal_fold(eng.turns()[0])
            steps += 1
            if eng.cur.validate():
                return False, {"errors": eng.cur.validate()}
        return True, {"steps": steps}
    s = random_splitting(ctx, rng, rng.randint(1, 6))
    cands = [e for e in s.edge_ids]
    e = rng.choice(cands)
    try:
        t, _ = collapse(s, [e])
    except SplittingError:
        return True, {"steps": 0}
    errs = [x for x in t.validate() if "valence" not in x and "max_edges" not in x]
    return not errs and not s.validate(), {"steps": 1}


def _prop_pullback(rng):
    ctx = rng.choice(ROUND_TRIP_CONTEXTS)
    m = random_foldable_map(ctx, rng, rng.randint(1, 4))
    eng = FoldEngine(m)
    stop = rng.randint(0, 3)
    for _ in range(stop):
        ts = eng.turns()
        if not ts:
            break
        eng.maximal_fold(ts[0])
    h = eng.h()
    if not h.foldable:
        return True, {"skipped": 1}
    worst = 0
    ok = True
    for e in m.codomain.edge_ids:
        pb = pullback(h, e)
        worst = max(worst, pb.sharp_branched)
        ok = ok and pb.within_bound and pb.sections_ok
    return ok, {"sharp": worst}


def _prop_edge_fiber(rng):
    ctx = rng.choice(ROUND_TRIP_CONTEXTS)
    m = random_positive_auto(ctx, rng, rng.randint(1, 5))
    e = rng.choice(m.codomain.edge_ids)
    fac = factorize(m, EdgeFiberStrategy(e))
    seg = fac.certificate.segments[-1]
    res = _verify(m, fac)
    return (seg.bound <= 4 * seg.witness["fiber"] and res.ok and fac.round_trip(),
            {"bound": seg.bound, "fiber": seg.witness["fiber"]})


def _verify(m, fac):
    groups = [(g.turn.vertex, g.turn.first, g.turn.second, g.count) for g in fac.groups]
    return verify_replay(m, groups, fac.certificate.segments, fac.certificate.total)


def _prop_prioritized(rng):
    ctx = rng.choice(ROUND_TRIP_CONTEXTS)
    m = random_positive_auto(ctx, rng, rng.randint(1, 5))
    es = m.domain.edge_ids
    from foldkit.gmap import foldable_turns
    pairs = [{abs(t.first), abs(t.second)} for t in foldable_turns(m)]
    pairs = [p for p in pairs if len(p) < len(es)]
    if pairs and rng.random() < 0.8:
        z = sorted(rng.choice(pairs))
    else:
        z = rng.sample(es, rng.randint(1, len(es) - 1))
    fac = factorize(m, PrioritizeStrategy(z))
    seg = fac.certificate.segments[0]
    res = _verify(m, fac)
    ok = seg.bound <= 2 and res.ok and seg.witness.get("component_bijection", True) \
        and seg.witness.get("immersion", True)
    return ok, {"bound": seg.bound}


def _prop_step1(rng):
    m = random_step1_instance(rng)
    out = run_step1_processes(m)
    res = _verify(m, out["factorization"])
    ok = out["outcome"] == "bounded" and out["within_bound"] and out["jumps_within_bound"] and res.ok
    return ok, {"total": out["total"], "bound": out["bound"]}


def _prop_jumps(rng):
    ctx = rng.choice(ROUND_TRIP_CONTEXTS)
    if ctx.max_edges < 1:
        return True, {}
    m = random_positive_auto(ctx, rng, rng.randint(1, 5))
    data = covering_rank_data(factorize(m))
    return data["within_bound"], {"jumps": data["total_jumps"]}


def _prop_needle(rng):
    ctx = rng.choice([FactorContext(0, 2), FactorContext(0, 3), FactorContext(1, 2)])
    m = random_needle_map(ctx, rng, rng.randint(0, 3))
    audits = needle_audits(m)
    return all(a["pass"] for a in audits), {"needles": len(audits)}


def _prop_first_return(rng):
    from foldkit.traintrack import first_return_consistency, suspension_axis
    rep = random_eg_rep(rng)
    ax = suspension_axis(rep)
    return all(first_return_consistency(ax, 5)), {"period": ax.period}


def _prop_penultimate(rng):
    from foldkit.traintrack import (
        compute_filtration, neg_top_isomorphism, penultimate_collapse, tile_bijection)
    rep = random_two_stratum_rep(rng, rng.choice(["EG", "NEG"]))
    filt = compute_filtration(rep)
    down, _ = penultimate_collapse(rep, filt)
    top = filt.strata[-1]
    ok = down.matrix == top.block
    if top.cls == "NEG":
        ok = ok and neg_top_isomorphism(rep, filt)
    else:
        ok = ok and all(tile_bijection(rep, filt, k) for k in range(1, 6))
    return ok, {"top": top.cls}


def _prop_claim(rng):
    from foldkit.outerspace import claim_construction, optimal_instance
    m = optimal_instance(rng, r=rng.randint(2, 3), s_loops=rng.randint(1, 2),
                         unfold=rng.random() < 0.7, blowup=rng.random() < 0.4)
    res = claim_construction(m)
    return res.ok, {"steps": len(res.steps)}


def _prop_projection(rng):
    from foldkit.outerspace import optimal_instance, projection_inequality_report
    m = optimal_instance(rng, r=rng.randint(2, 3), s_loops=rng.randint(1, 2),
                         unfold=rng.random() < 0.7, blowup=rng.random() < 0.4)
    rep = projection_inequality_report(m)
    return rep.status == "confirmed", {"lhs": rep.lhs_upper}


def _prop_generator_soundness(rng):
    ctx = rng.choice(ROUND_TRIP_CONTEXTS)
    s = random_splitting(ctx, rng, rng.randint(1, 6))
    m = random_foldable_map(ctx, rng, rng.randint(1, 3))
    return not s.validate() and all(len(g) >= 2 or v in gates(m).labeled
                                    for v, g in gates(m).gates.items()), {}


SUITES: Dict[str, Callable] = {
    "round-trip": _prop_round_trip,
    "transition-multiplicativity": _prop_multiplicativity,
    "rank-conservation": _prop_rank_conservation,
    "pullback-sharp-bound": _prop_pullback,
    "edge-fiber-bound": _prop_edge_fiber,
    "prioritized-witness": _prop_prioritized,
    "step1-bound": _prop_step1,
    "jump-budget": _prop_jumps,
    "sewing-needle": _prop_needle,
    "first-return": _prop_first_return,
    "penultimate-collapse": _prop_penultimate,
    "claim-construction": _prop_claim,
    "projection-inequality": _prop_projection,
    "generator-soundness": _prop_generator_soundness,
}


@dataclass
class SuiteReport:
    name: str
    trials: int
    seed: int
    passed: int
    failed: int
    failing_seeds: List[int]
    errors: Dict[int, str]
    digest: str
    details: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def as_dict(self) -> dict:
        return {"name": self.name, "trials": self.trials, "seed": self.seed,
                "passed": self.passed, "failed": self.failed,
                "failing_seeds": list(self.failing_seeds),
                "errors": {str(k): v for k, v in sorted(self.errors.items())},
                "digest": self.digest}


def trial_seeds(seed: int, trials: int) -> List[int]:
    rng = random.Random(seed)
    return [rng.getrandbits(64) for _ in range(trials)]


def run_trial(name: str, trial_seed: int):
    return SUITES[name](random.Random(trial_seed))


def run_suite(name: str, trials: int, seed: int) -> SuiteReport:
    if name not in SUITES:
        raise KeyError("unknown suite %s" % name)
    passed = 0
    failing = []
    errors = {}
    details = []
    for ts in trial_seeds(seed, trials):
        try:
            ok, info = run_trial(name, ts)
        except (GenerationError, FoldError) as exc:
            ok, info = False, {"error": str(exc)}
            errors[ts] = str(exc)
        if ok:
            passed += 1
        else:
            failing.append(ts)
        details.append({"seed": ts, "ok": bool(ok), "info": _jsonable(info)})
    digest = hashlib.sha256(json.dumps(details, sort_keys=True).encode()).hexdigest()
    return SuiteReport(name, trials, seed, passed, trials - passed, sorted(failing), errors,
                       digest, details)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    return x
