"""JSON documents and the foldkit command line.

Documents are UTF-8 JSON with a fixed field order:

    {"format_version": "1", "kind": ..., "context": {...}, "body": {...}}

Signed edge tokens are written "+3" / "-3", decoration letters "A1^k" or "F0_1^k".
Exit codes: 0 ok, 1 input error, 2 cap exceeded, 3 verification failure, 4 property failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import tempfile
from fractions import Fraction
from typing import List, Optional, Tuple

from foldkit.context import ContextError, FactorContext
from foldkit.fold import (
    FOLD_CAP, EdgeFiberStrategy, FoldError, FoldStrategy, NoDoubleOmegaStrategy,
    PrioritizeStrategy, Segment, Step1Strategy, factorize, pullback, simplicial_model,
    verify_replay,
)
from foldkit.gmap import GraphMap, MapError, transition_matrix
from foldkit.splitting import (
    DecoratedPath, Edge, Label, Splitting, SplittingError, Word, crossing_number, parse_gen,
)

FORMAT_VERSION = "1"
EXIT_OK, EXIT_INPUT, EXIT_CAP, EXIT_VERIFY, EXIT_PROPERTY = 0, 1, 2, 3, 4
KINDS = ("splitting", "map", "autorep", "factorization", "certificate", "report")


class DocumentError(ValueError):
    """Schema or validation problem, optionally anchored to a line of the input text."""

    def __init__(self, msg: str, line: Optional[int] = None):
        super().__init__(msg)
        self.line = line


INPUT_ERRORS = (DocumentError, SplittingError, MapError, ContextError, FoldError, OSError)


# ---------------------------------------------------------------- tokens

_EDGE_RE = re.compile(r"^[+-]\d+$")
_LETTER_RE = re.compile(r"^([AF][0-9_]+)\^(-?\d+)$")


def edge_token(e: int) -> str:
    return "%+d" % e


def letter_tokens(w: Word) -> List[str]:
    return ["%s^%d" % (g, k) for g, k in w]


def path_tokens(p: DecoratedPath) -> List[str]:
    out = letter_tokens(p.decos[0])
    for i, e in enumerate(p.edges):
        out.append(edge_token(e))
        out.extend(letter_tokens(p.decos[i + 1]))
    return out


def parse_word_tokens(tokens) -> Word:
    out = []
    for t in tokens:
        m = _LETTER_RE.match(t) if isinstance(t, str) else None
        if not m:
            raise DocumentError("bad decoration token %r" % (t,))
        parse_gen(m.group(1))
        out.append((m.group(1), int(m.group(2))))
    return tuple(out)


def parse_path(s: Splitting, start: int, tokens) -> DecoratedPath:
    if not isinstance(tokens, list):
        raise DocumentError("path must be a token list")
    edges, decos, cur = [], [], []
    v = start
    for t in tokens:
        if isinstance(t, str) and _EDGE_RE.match(t):
            e = int(t)
            if abs(e) not in s.edge_map:
                raise DocumentError("unknown edge token %s" % t)
            if s.origin(e) != v:
                raise DocumentError("path is not connected at %s" % t)
            decos.append(parse_word_tokens(cur))
            cur = []
            edges.append(e)
            v = s.terminus(e)
        else:
            cur.append(t)
    decos.append(parse_word_tokens(cur))
    return DecoratedPath(start, v, tuple(edges), tuple(decos))


# ---------------------------------------------------------------- bodies

def _fraction_str(x: Optional[Fraction]) -> Optional[str]:
    return None if x is None else str(x)


def splitting_body(s: Splitting) -> dict:
    return {
        "subdivided": s.subdivided,
        "vertices": [{"id": v, "atoms": sorted(l.atoms), "free_rank": l.free_rank}
                     for v, l in s.vertices],
        "edges": [{"id": e.id, "src": e.src, "dst": e.dst, "length": _fraction_str(e.length),
                   "parent": e.parent} for e in s.edges],
    }


def _req(obj, key, typ, where):
    if not isinstance(obj, dict) or key not in obj:
        raise DocumentError("%s: missing field %r" % (where, key))
    val = obj[key]
    if typ is not None and not isinstance(val, typ) or isinstance(val, bool) and typ is int:
        raise DocumentError("%s: field %r has wrong type" % (where, key))
    return val


def parse_splitting(body, ctx: FactorContext, where="splitting") -> Splitting:
    vs = []
    for v in _req(body, "vertices", list, where):
        atoms = _req(v, "atoms", list, where + ".vertices")
        vs.append((_req(v, "id", int, where + ".vertices"),
                   Label(frozenset(atoms), _req(v, "free_rank", int, where + ".vertices"))))
    es = []
    for e in _req(body, "edges", list, where):
        ln = e.get("length") if isinstance(e, dict) else None
        try:
            ln = None if ln is None else Fraction(ln)
        except (ValueError, TypeError, ZeroDivisionError):
            raise DocumentError("%s.edges: bad length %r" % (where, ln))
        es.append(Edge(_req(e, "id", int, where + ".edges"), _req(e, "src", int, where + ".edges"),
                       _req(e, "dst", int, where + ".edges"), ln, e.get("parent")))
    s = Splitting(ctx, tuple(vs), tuple(es), bool(body.get("subdivided", False)))
    errs = s.validate()
    if errs:
        raise DocumentError("%s: %s" % (where, "; ".join(errs)))
    return s


def map_core(m: GraphMap) -> dict:
    return {
        "vertex_map": [[v, m.vertex_map[v]] for v in sorted(m.vertex_map)],
        "edges": [{"edge": e, "image": path_tokens(m.edge_images[e])}
                  for e in sorted(m.edge_images)],
        "gens": [{"gen": g, "word": letter_tokens(m.gen_images[g])}
                 for g in sorted(m.gen_images)],
    }


def map_body(m: GraphMap) -> dict:
    body = {"domain": splitting_body(m.domain)}
    body["codomain"] = "domain" if m.codomain == m.domain else splitting_body(m.codomain)
    body.update(map_core(m))
    return body


def parse_map_core(body, dom: Splitting, cod: Splitting, where="map") -> GraphMap:
    vm = {}
    for pair in _req(body, "vertex_map", list, where):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise DocumentError("%s.vertex_map: entries are [v, w] pairs" % where)
        vm[pair[0]] = pair[1]
    if set(vm) != set(dom.vertex_ids) or not set(vm.values()) <= set(cod.vertex_ids):
        raise DocumentError("%s.vertex_map: does not match the splittings" % where)
    imgs = {}
    for item in _req(body, "edges", list, where):
        e = _req(item, "edge", int, where + ".edges")
        if e not in dom.edge_map:
            raise DocumentError("%s.edges: unknown domain edge %d" % (where, e))
        imgs[e] = parse_path(cod, vm[dom.edge_map[e].src], _req(item, "image", list, where))
    if set(imgs) != set(dom.edge_ids):
        raise DocumentError("%s.edges: every domain edge needs an image" % where)
    gens = {}
    for item in body.get("gens", []):
        gens[_req(item, "gen", str, where + ".gens")] = parse_word_tokens(
            _req(item, "word", list, where + ".gens"))
    m = GraphMap(dom, cod, vm, imgs, gens)
    errs = m.validate()
    if errs:
        raise DocumentError("%s: %s" % (where, "; ".join(errs)))
    return m


def parse_map(body, ctx: FactorContext) -> GraphMap:
    dom = parse_splitting(_req(body, "domain", dict, "map"), ctx, "map.domain")
    cb = _req(body, "codomain", None, "map")
    cod = dom if cb == "domain" else parse_splitting(cb, ctx, "map.codomain")
    return parse_map_core(body, dom, cod)


def autorep_body(rep) -> dict:
    body = {"base": splitting_body(rep.base)}
    body.update(map_core(rep.map))
    return body


def parse_autorep(body, ctx: FactorContext):
    from foldkit.traintrack import TrainTrackError, make_rep
    base = parse_splitting(_req(body, "base", dict, "autorep"), ctx, "autorep.base")
    m = parse_map_core(body, base, base, "autorep")
    try:
        return make_rep(base, m)
    except TrainTrackError as exc:
        raise DocumentError("autorep: %s" % exc)


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (set, frozenset)):
        return sorted(jsonable(v) for v in x)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float) and (x != x or x in (float("inf"), float("-inf"))):
        return str(x)
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return x.item()
    return x


def segment_body(seg: Segment) -> dict:
    return {"tag": seg.tag, "start": seg.start, "end": seg.end, "bound": seg.bound,
            "witness": jsonable(seg.witness)}


def parse_segment(item) -> Segment:
    w = "certificate.segments"
    return Segment(_req(item, "tag", str, w), _req(item, "start", int, w), _req(item, "end", int, w),
                   _req(item, "bound", int, w), _req(item, "witness", dict, w))


# ---------------------------------------------------------------- documents

def context_body(ctx: FactorContext) -> dict:
    return {"atom_count": ctx.atom_count, "corank": ctx.corank}


def document(kind: str, ctx: FactorContext, body: dict) -> dict:
    return {"format_version": FORMAT_VERSION, "kind": kind, "context": context_body(ctx),
            "body": body}


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _line_of(text: str, key: str) -> Optional[int]:
    needle = '"%s"' % key
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def loads(text: str) -> Tuple[str, FactorContext, dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError("invalid JSON: %s" % exc.msg, exc.lineno)
    if not isinstance(doc, dict):
        raise DocumentError("document must be a JSON object", 1)
    for key in ("format_version", "kind", "context", "body"):
        if key not in doc:
            raise DocumentError("missing header field %r" % key, 1)
    if doc["format_version"] != FORMAT_VERSION:
        raise DocumentError("unsupported format_version %r" % doc["format_version"],
                            _line_of(text, "format_version"))
    if doc["kind"] not in KINDS:
        raise DocumentError("unknown kind %r" % doc["kind"], _line_of(text, "kind"))
    c = doc["context"]
    try:
        ctx = FactorContext(_req(c, "atom_count", int, "context"), _req(c, "corank", int, "context"))
    except (ContextError, DocumentError) as exc:
        raise DocumentError(str(exc), _line_of(text, "context"))
    return doc["kind"], ctx, doc["body"]


def read_document(path: str, expect: Optional[Tuple[str, ...]] = None):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        kind, ctx, body = loads(text)
        if expect and kind not in expect:
            raise DocumentError("expected a %s document, got %s" % ("/".join(expect), kind),
                                _line_of(text, "kind"))
        if kind == "splitting":
            obj = parse_splitting(body, ctx)
        elif kind == "map":
            obj = parse_map(body, ctx)
        elif kind == "autorep":
            obj = parse_autorep(body, ctx)
        else:
            obj = body
    except DocumentError as exc:
        if exc.line is None:
            field = re.findall(r"'(\w+)'", str(exc))
            exc.line = _line_of(text, field[0]) if field else None
        raise
    except (SplittingError, MapError, ContextError) as exc:
        raise DocumentError(str(exc))
    return kind, ctx, obj, text


def write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(doc: dict, out: Optional[str]) -> None:
    text = dumps(doc)
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- factorization documents

def parse_strategy(spec: str) -> FoldStrategy:
    if spec == "arbitrary":
        return FoldStrategy()
    if spec == "step1":
        return Step1Strategy()
    if spec == "no-double-omega":
        return NoDoubleOmegaStrategy()
    if spec.startswith("prioritize:"):
        try:
            edges = [int(x) for x in spec.split(":", 1)[1].split(",") if x]
        except ValueError:
            raise DocumentError("bad edge list in %r" % spec)
        if not edges:
            raise DocumentError("empty prioritized edge list")
        return PrioritizeStrategy(edges)
    if spec.startswith("edge-fiber:"):
        try:
            return EdgeFiberStrategy(int(spec.split(":", 1)[1]))
        except ValueError:
            raise DocumentError("bad edge in %r" % spec)
    raise DocumentError("unknown strategy %r" % spec)


def factorization_body(fac, source_ref: dict) -> dict:
    return {
        "source": source_ref,
        "strategy": fac.strategy,
        "fold_count": fac.fold_count,
        "complete": fac.complete,
        "capped": fac.capped,
        "splittings": [splitting_body(fac.simplicial_splitting(j))
                       for j in range(len(fac.splittings))],
        "steps": [{"index": st.index, "group": st.group, "kind": st.kind,
                   "turn": [st.turn.vertex, edge_token(st.turn.first), edge_token(st.turn.second)]}
                  for st in fac.steps],
        "terminal": map_core(fac.terminal),
        "log": list(fac.log),
    }


def certificate_body(fac, source_ref: dict, fac_ref: dict) -> dict:
    return {
        "source": source_ref,
        "factorization": fac_ref,
        "strategy": fac.strategy,
        "groups": [{"vertex": g.turn.vertex, "first": edge_token(g.turn.first),
                    "second": edge_token(g.turn.second), "count": g.count, "kind": g.kind}
                   for g in fac.groups],
        "segments": [segment_body(s) for s in fac.certificate.segments],
        "total": fac.certificate.total,
    }


def _ref(path: str, text: str, base_dir: str) -> dict:
    return {"path": os.path.relpath(os.path.abspath(path), os.path.abspath(base_dir)),
            "sha256": sha256_text(text)}


def write_factorization(fac, ctx, source_path, source_text, out_dir) -> Tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    fac_path = os.path.join(out_dir, "factorization.json")
    cert_path = os.path.join(out_dir, "certificate.json")
    src_ref = _ref(source_path, source_text, out_dir)
    fac_text = dumps(document("factorization", ctx, factorization_body(fac, src_ref)))
    write_atomic(fac_path, fac_text)
    cert = document("certificate", ctx,
                    certificate_body(fac, src_ref, _ref(fac_path, fac_text, out_dir)))
    write_atomic(cert_path, dumps(cert))
    return fac_path, cert_path


# ---------------------------------------------------------------- commands

def default_seed() -> int:
    try:
        return int(os.environ.get("FOLDKIT_SEED", "0"))
    except ValueError:
        return 0


def cmd_fold(args) -> int:
    kind, ctx, m, text = read_document(args.input, ("map", "autorep"))
    if kind == "autorep":
        m = m.map
    strat = parse_strategy(args.strategy)
    fac = factorize(m, strat, args.cap)
    _, cert = write_factorization(fac, ctx, args.input, text, args.out)
    print("folds=%d total=%d segments=%s" % (fac.fold_count, fac.certificate.total,
          ",".join("%s<=%d" % (s.tag, s.bound) for s in fac.certificate.segments)))
    if fac.capped:
        print("cap of %d folds exceeded; partial artifacts in %s" % (args.cap, args.out),
              file=sys.stderr)
        return EXIT_CAP
    return EXIT_OK


def cmd_axis(args) -> int:
    from foldkit.traintrack import (
        TrainTrackError, first_return_consistency, lambda_independence, suspension_axis,
        theorem_a_upper_report, train_track_depth_check,
    )
    _, ctx, rep, text = read_document(args.input, ("autorep",))
    try:
        axis = suspension_axis(rep)
        report = theorem_a_upper_report(axis, args.n_max) if axis.eg_aperiodic else None
        seeds = [int(x) for x in args.seeds.split(",") if x] if args.seeds else []
        lams = lambda_independence(rep, seeds) if seeds else (axis.expansion,)
    except TrainTrackError as exc:
        print("rejected: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    write_factorization(axis.factorization, ctx, args.input, text, args.out)
    pm = axis.period_matrix()
    body = {
        "command": "axis",
        "period": axis.period,
        "eg_aperiodic": axis.eg_aperiodic,
        "lambda": axis.expansion,
        "first_return": map_core(axis.first_return),
        "period_matrix": {"index": list(pm.cols), "entries": [list(r) for r in pm.entries]},
        "first_return_consistency": first_return_consistency(axis, args.consistency),
        "train_track_depth_ok": train_track_depth_check(axis),
        "lambda_independent": [float(x) for x in lams],
        "lambda_spread": max(lams) - min(lams),
        "growth": jsonable(report),
    }
    write_atomic(os.path.join(args.out, "axis.json"), dumps(document("report", ctx, body)))
    line = "p=%d lambda=%.10f" % (axis.period, axis.expansion)
    if report:
        line += " B=%.6f B*log(lambda)=%.6f" % (report["B"], report["bound"])
    print(line)
    return EXIT_OK


def cmd_tt_analyze(args) -> int:
    from foldkit.traintrack import compute_filtration, illegal_turns, rtt_check
    _, ctx, rep, _ = read_document(args.input, ("autorep",))
    filt = compute_filtration(rep)
    strata = [{"edges": list(s.edges), "class": s.cls, "period": s.period,
               "expansion": s.expansion, "substrata": [list(x) for x in s.substrata]}
              for s in filt.strata]
    body = {"command": "tt-analyze", "strata": strata,
            "upper_triangular": filt.is_upper_triangular(),
            "invariant": filt.is_invariant(rep),
            "illegal_turns": [[v, edge_token(a), edge_token(b)] for v, a, b in illegal_turns(rep)],
            "rtt": jsonable(rtt_check(rep, filt))}
    emit(document("report", ctx, body), args.out)
    return EXIT_OK


def cmd_crossing(args) -> int:
    kind, ctx, m, _ = read_document(args.input, ("map", "autorep"))
    if kind == "autorep":
        m = m.map
    edges = [args.edge] if args.edge is not None else m.codomain.edge_ids
    for e in edges:
        if e not in m.codomain.edge_map:
            raise DocumentError("unknown codomain edge %d" % e)
    tm = transition_matrix(m)
    body = {"command": "crossing",
            "crossings": [{"edge": d, "counts": [[e, crossing_number(m.edge_images[d], e)]
                                                 for e in edges]}
                          for d in m.domain.edge_ids],
            "transition_matrix": {"rows": list(tm.rows), "cols": list(tm.cols),
                                  "entries": [list(r) for r in tm.entries]}}
    emit(document("report", ctx, body), args.out)
    return EXIT_OK


def cmd_pullback(args) -> int:
    kind, ctx, m, _ = read_document(args.input, ("map", "autorep"))
    if kind == "autorep":
        m = m.map
    h = m if m.simplicial else simplicial_model(m)
    sub = [e for e in h.codomain.edge_ids
           if h.codomain.edge_map[e].parent == args.edge or e == args.edge]
    if not sub:
        raise DocumentError("unknown codomain edge %d" % args.edge)
    pb = pullback(h, sub[0])
    body = {"command": "pullback", "edge": args.edge,
            "components": [list(c) for c in pb.components],
            "branched": [list(c) for c in pb.branched],
            "unbranched": [list(c) for c in pb.unbranched],
            "sharp_branched": pb.sharp_branched, "sharp_all": pb.sharp_all,
            "bound": pb.bound, "within_bound": pb.within_bound, "sections_ok": pb.sections_ok}
    emit(document("report", ctx, body), args.out)
    return EXIT_OK


def cmd_metric(args) -> int:
    from foldkit.outerspace import (
        MetricError, optimality_report, projection_inequality_report, stretch_factor)
    try:
        if args.map:
            kind, ctx, m, _ = read_document(args.map, ("map",))
            opt = optimality_report(m)
            pr = projection_inequality_report(m)
            body = {"command": "metric", "lip": str(opt.lip), "tension": list(opt.tension),
                    "optimal": opt.optimal, "gap": str(opt.gap),
                    "d_o": pr.d_o, "ratio": str(pr.ratio), "lhs_upper": pr.lhs_upper,
                    "rhs": pr.rhs, "status": pr.status,
                    "candidate_complete": pr.candidate_complete}
        else:
            if not (args.source and args.target):
                raise DocumentError("metric needs --map or both --source and --target")
            _, ctx, s, _ = read_document(args.source, ("splitting",))
            _, ctx2, t, _ = read_document(args.target, ("splitting",))
            if ctx != ctx2:
                raise DocumentError("source and target contexts differ")
            st = stretch_factor(s.normalized(), t.normalized())
            body = {"command": "metric", "ratio": str(st.ratio), "d_o": st.value,
                    "witness": path_tokens(st.witness) if st.witness else None,
                    "candidates": st.candidates, "candidate_complete": st.candidate_complete,
                    "relative": st.relative}
    except MetricError as exc:
        raise DocumentError(str(exc))
    emit(document("report", ctx, body), args.out)
    return EXIT_OK


def _resolve(ref, base_dir: str, what: str) -> Tuple[str, str]:
    if not isinstance(ref, dict) or "path" not in ref:
        raise DocumentError("certificate: missing %s reference" % what)
    path = os.path.join(base_dir, ref["path"])
    if not os.path.exists(path):
        raise DocumentError("referenced %s not found: %s" % (what, ref["path"]))
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if ref.get("sha256") and ref["sha256"] != sha256_text(text):
        raise DocumentError("referenced %s changed: digest mismatch" % what)
    return path, text


def verify_certificate(path: str) -> Tuple[int, str]:
    _, ctx, body, _ = read_document(path, ("certificate",))
    base_dir = os.path.dirname(os.path.abspath(path))
    src_path, _ = _resolve(body.get("source"), base_dir, "source")
    fac_path, _ = _resolve(body.get("factorization"), base_dir, "factorization")
    kind, sctx, m, _ = read_document(src_path, ("map", "autorep"))
    if kind == "autorep":
        m = m.map
    if sctx != ctx:
        raise DocumentError("certificate context differs from its source")
    groups = []
    for g in _req(body, "groups", list, "certificate"):
        w = "certificate.groups"
        groups.append((_req(g, "vertex", int, w), int(_req(g, "first", str, w)),
                       int(_req(g, "second", str, w)), _req(g, "count", int, w)))
    segments = [parse_segment(s) for s in _req(body, "segments", list, "certificate")]
    total = _req(body, "total", int, "certificate")
    res = verify_replay(m, groups, segments, total)
    if not res.ok:
        return EXIT_VERIFY, res.message
    _, _, fbody, _ = read_document(fac_path, ("factorization",))
    claimed = fbody.get("splittings", [])
    from foldkit.fold import replay
    eng = replay(m, groups)
    fresh = [splitting_body(eng.splitting_at(j)) for j in range(eng.J + 1)]
    if claimed != fresh:
        for j, (a, b) in enumerate(zip(claimed, fresh)):
            if a != b:
                return EXIT_VERIFY, "splitting T_%d differs from the replay" % j
        return EXIT_VERIFY, "splitting count differs from the replay"
    return EXIT_OK, "ok: %d segments, total %d" % (len(segments), total)


def cmd_verify(args) -> int:
    code, msg = verify_certificate(args.certificate)
    print(msg, file=sys.stdout if code == EXIT_OK else sys.stderr)
    return code


def cmd_suite(args) -> int:
    from foldkit.harness import SUITES, run_suite
    if args.name not in SUITES:
        raise DocumentError("unknown suite %r; known: %s" % (args.name, ", ".join(sorted(SUITES))))
    seed = args.seed if args.seed is not None else default_seed()
    rep = run_suite(args.name, args.trials, seed)
    ctx = FactorContext(0, 2)
    body = {"command": "suite"}
    body.update(rep.as_dict())
    emit(document("report", ctx, body), args.out)
    print("%s: %d/%d passed digest=%s" % (rep.name, rep.passed, rep.trials, rep.digest[:16]),
          file=sys.stderr)
    return EXIT_OK if rep.ok else EXIT_PROPERTY


def parse_context(text: str) -> FactorContext:
    try:
        a, c = (int(x) for x in text.split(","))
    except ValueError:
        raise DocumentError("context must be 'atom_count,corank'")
    return FactorContext(a, c)


def cmd_gen(args) -> int:
    from foldkit.harness import GenerationError, GenSpec, generate
    from foldkit.traintrack import make_rep
    ctx = parse_context(args.context)
    seed = args.seed if args.seed is not None else default_seed()
    try:
        obj = generate(GenSpec(ctx, args.kind, seed, args.size))
    except GenerationError as exc:
        raise DocumentError(str(exc))
    if isinstance(obj, Splitting):
        doc = document("splitting", ctx, splitting_body(obj))
    elif args.kind == "random_positive_auto":
        doc = document("autorep", ctx, autorep_body(make_rep(obj.domain, obj)))
    else:
        doc = document("map", ctx, map_body(obj))
    emit(doc, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foldkit", description="Fold calculus toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fold", help="fold factorization with a distance certificate")
    f.add_argument("input")
    f.add_argument("--strategy", default="arbitrary")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--cap", type=int, default=FOLD_CAP)
    f.set_defaults(func=cmd_fold)

    a = sub.add_parser("axis", help="suspension fold axis and growth report")
    a.add_argument("input")
    a.add_argument("--out", required=True, help="output directory")
    a.add_argument("--seeds", default="1,2", help="extra factorization seeds for the lambda check")
    a.add_argument("--n-max", type=int, default=30)
    a.add_argument("--consistency", type=int, default=5)
    a.set_defaults(func=cmd_axis)

    t = sub.add_parser("tt-analyze", help="filtration and RTT report")
    t.add_argument("input")
    t.add_argument("--out")
    t.set_defaults(func=cmd_tt_analyze)

    c = sub.add_parser("crossing", help="crossing numbers and transition matrix")
    c.add_argument("input")
    c.add_argument("--edge", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_crossing)

    b = sub.add_parser("pullback", help="pullback graph over a codomain edge")
    b.add_argument("input")
    b.add_argument("--edge", type=int, required=True)
    b.add_argument("--out")
    b.set_defaults(func=cmd_pullback)

    m = sub.add_parser("metric", help="stretch factor or projection report")
    m.add_argument("--source")
    m.add_argument("--target")
    m.add_argument("--map")
    m.add_argument("--out")
    m.set_defaults(func=cmd_metric)

    v = sub.add_parser("verify", help="re-check a certificate")
    v.add_argument("certificate")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("suite", help="run a property suite")
    s.add_argument("name")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_suite)

    g = sub.add_parser("gen", help="generate a random artifact")
    g.add_argument("kind", choices=["random_splitting", "random_positive_auto",
                                    "random_foldable_map", "random_needle_map"])
    g.add_argument("--context", default="0,2")
    g.add_argument("--seed", type=int)
    g.add_argument("--size", type=int, default=3)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DocumentError as exc:
        src = getattr(args, "input", None) or getattr(args, "certificate", None) or ""
        loc = "%s:%d: " % (src, exc.line) if exc.line else ("%s: " % src if src else "")
        print("error: %s%s" % (loc, exc), file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
