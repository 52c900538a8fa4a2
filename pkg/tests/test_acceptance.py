"""One test per acceptance criterion; each records a PASS/FAIL line in the terminal summary."""
import math
import os
import subprocess
import sys
import time


from conftest import ACCEPTANCE_LINES, DATA
from foldkit.cli import main
from foldkit.context import FactorContext, derive_constants
from foldkit.gmap import make_map
from foldkit.harness import run_suite
from foldkit.splitting import rose
from foldkit.traintrack import (
    lambda_independence, make_rep, suspension_axis, theorem_a_upper_report,
)

SEED = 2024


def record(n, ok, note):
    line = "criterion %d: %s %s" % (n, "PASS" if ok else "FAIL", note)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def suite(name, trials):
    t0 = time.perf_counter()
    rep = run_suite(name, trials, SEED)
    return rep, time.perf_counter() - t0


def fib_rep():
    r = rose(2)
    return make_rep(r, make_map(r, r, {1: [1, 2], 2: [1]}))


def test_criterion_01_constants():
    golden = {(0, 2): 291, (2, 1): 687}
    ok = True
    for (a, c), want in golden.items():
        k = derive_constants(FactorContext(a, c))
        me = 2 * a + 3 * c - 3
        d1 = (1 + k.jumping_bound) * (k.process_one_bound + 2 * me) + 1
        d2 = d1 + 4
        d33 = 16 * a + 24 * c - 18
        ok &= (k.max_edges, k.delta1, k.delta2, k.delta33) == (me, d1, d2, d33)
        ok &= k.delta3 == max(2 * d2 + 1, d33 + d2 + 1) == want
    ctx = FactorContext(2, 1)
    t0 = time.perf_counter()
    for _ in range(1000):
        derive_constants(ctx)
    per_call = (time.perf_counter() - t0) / 1000
    record(1, ok and per_call < 1e-3, "golden 291/687, %.1f us per call" % (per_call * 1e6))


def test_criterion_02_round_trip():
    rep, dt = suite("round-trip", 500)
    record(2, rep.ok and dt < 60, "%d/500 round trips in %.1f s" % (rep.passed, dt))


def test_criterion_03_multiplicativity():
    rep, dt = suite("transition-multiplicativity", 500)
    record(3, rep.ok, "%d/500 factorizations multiply exactly (%.1f s)" % (rep.passed, dt))


def test_criterion_04_rank_conservation():
    rep, dt = suite("rank-conservation", 1000)
    record(4, rep.ok, "%d/1000 fold/collapse steps (%.1f s)" % (rep.passed, dt))


def test_criterion_05_certificates(tmp_path):
    fiber, _ = suite("edge-fiber-bound", 200)
    prio, _ = suite("prioritized-witness", 200)
    # the CLI verifier on prioritized certificates of generated maps
    cli_ok = 0
    for seed in range(10):
        src = tmp_path / ("m%d.json" % seed)
        main(["gen", "random_positive_auto", "--context", "0,3", "--seed", str(seed),
              "--out", str(src)])
        out = tmp_path / ("o%d" % seed)
        main(["fold", str(src), "--strategy", "prioritize:1,2", "--out", str(out)])
        cli_ok += main(["verify", str(out / "certificate.json")]) == 0
    ok = fiber.ok and prio.ok and cli_ok == 10
    record(5, ok, "edge-fiber %d/200, prioritized %d/200, cli verify %d/10"
           % (fiber.passed, prio.passed, cli_ok))


def test_criterion_06_step1():
    rep, dt = suite("step1-bound", 100)
    jumps, _ = suite("jump-budget", 200)
    worst = max(d["info"]["total"] for d in rep.details)
    record(6, rep.ok and jumps.ok, "step1 %d/100 (max total %d), jump budget %d/200 (%.1f s)"
           % (rep.passed, worst, jumps.passed, dt))


def test_criterion_07_pullback():
    rep, dt = suite("pullback-sharp-bound", 1000)
    record(7, rep.ok, "%d/1000 pullbacks within 2*MaxEdges (%.1f s)" % (rep.passed, dt))


def test_criterion_08_sewing_needle():
    rep, _ = suite("sewing-needle", 100)
    needles = sum(d["info"].get("needles", 0) for d in rep.details)
    record(8, rep.ok and needles >= 50, "%d needle folds audited, %d/100 trials pass"
           % (needles, rep.passed))


def test_criterion_09_spectral():
    t0 = time.perf_counter()
    rep = fib_rep()
    ax = suspension_axis(rep)
    lam_ok = abs(ax.expansion - (1 + math.sqrt(5)) / 2) <= 1e-9
    fr, _ = suite("first-return", 50)
    growth = theorem_a_upper_report(ax, 30)
    lams = lambda_independence(rep, (1, 2, 3))
    spread = max(lams) - min(lams)
    dt = time.perf_counter() - t0
    ok = lam_ok and fr.ok and growth["converged_at_30"] and spread <= 1e-9 and dt < 30
    record(9, ok, "lambda=%.10f, %d/50 axes, ratio at 30 = %.4f vs %.4f, spread %.1e, %.1f s"
           % (ax.expansion, fr.passed, growth["rows"][29]["ratio"], math.log(ax.expansion),
              spread, dt))


def test_criterion_10_penultimate():
    rep, dt = suite("penultimate-collapse", 50)
    tops = sorted({d["info"].get("top", "error") for d in rep.details})
    record(10, rep.ok, "%d/50 collapses, tops %s (%.1f s)" % (rep.passed, "/".join(tops), dt))


def test_criterion_11_projection_claim():
    claim, _ = suite("claim-construction", 100)
    proj, _ = suite("projection-inequality", 100)
    record(11, claim.ok and proj.ok, "claims %d/100, projection confirmed %d/100"
           % (claim.passed, proj.passed))


def run_cli(args, cwd):
    env = dict(os.environ, FOLDKIT_SEED="99")
    return subprocess.run([sys.executable, "-m", "foldkit.cli"] + args, cwd=cwd, env=env,
                          capture_output=True)


def test_criterion_12_determinism(tmp_path):
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        fib_map = os.path.join(DATA, "fibonacci.map.json")
        fib = os.path.join(DATA, "fibonacci.rep.json")
        procs = [
            run_cli(["gen", "random_foldable_map", "--context", "1,2", "--out", "gen.json"], d),
            run_cli(["fold", fib_map, "--strategy", "step1", "--out", "fold"], d),
            run_cli(["axis", fib, "--out", "axis"], d),
            run_cli(["suite", "round-trip", "--trials", "20", "--out", "suite.json"], d),
            run_cli(["tt-analyze", fib, "--out", "tt.json"], d),
        ]
        files = {}
        for root, _, names in os.walk(d):
            for n in names:
                p = os.path.join(root, n)
                files[os.path.relpath(p, d)] = open(p, "rb").read()
        outputs.append((files, [(p.returncode, p.stdout, p.stderr) for p in procs]))
    same = outputs[0] == outputs[1]
    codes = [c for c, _, _ in outputs[0][1]]
    record(12, same and codes == [0] * 5, "%d files byte-identical across runs, exit codes %s"
           % (len(outputs[0][0]), codes))
