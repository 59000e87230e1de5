"""One pass/fail line per primary acceptance criterion, at its stated tolerance.

The lines are repeated in the pytest terminal summary.
"""

import json
import random
import subprocess
import sys
import time

import pytest
from gmpy2 import mpfr

from flatrenorm.conjugacy import C1, NOT_C1, cauchy_rate, classify
from flatrenorm.examples import example_path, load_example, tuned_depth
from flatrenorm.mapcore import validate
from flatrenorm.numerics import to_decimal, working_precision
from flatrenorm.orbit import critical_orbit
from flatrenorm.renorm import S_to_x, renormalize, x_to_S
from flatrenorm.rigidity import (
    TOL_PLUS,
    SyntheticModel,
    asymptotic_checks,
    estimate_cplus_sum,
    estimate_lambda_s,
    estimate_lambda_u,
    gap_non_increasing,
    paired_comparison,
    product_identity,
    synthetic_table,
)
from flatrenorm.rotation import golden_denominators, golden_mean, return_times, rotation_number

LINES = []


def report(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def f():
    return load_example("golden_base")


@pytest.fixture(scope="module")
def runs():
    # tuned maps lose their combinatorics about two levels below the tuned depth
    out = {}
    for name in ("golden_base", "golden_partner", "golden_third"):
        out[name] = renormalize(load_example(name), tuned_depth(name) - 2)
    return out


def test_class_membership(f):
    t = time.perf_counter()
    rep = validate(f)
    gap = rep.get("joint_continuity").detail
    dt = time.perf_counter() - t
    with working_precision(f.precision):
        worst = max(
            abs(f._f1(f.x1) - f._f4(mpfr(1))),
            abs(f._f1(mpfr(0)) - f.length - f._f2(mpfr(0))),
            abs(f._f2(f.x3)),
            abs(f._f4(f.x4)),
        )
    ok = rep.passed and worst <= mpfr(2) ** -240 and dt < 10
    assert report("class membership", ok, f"all checks {rep.passed}, joint gap {to_decimal(worst, 3)} ({gap}), {dt:.2f} s")


def test_coordinate_round_trip():
    t = time.perf_counter()
    rng = random.Random(2024)
    worst = mpfr(0)
    with working_precision(256):
        for _ in range(100):
            a, b, c = sorted(mpfr(repr(rng.uniform(0.01, 0.99))) for _ in range(3))
            x = (mpfr(repr(-rng.uniform(0.05, 3.0))), a, b, c, mpfr(repr(rng.uniform(0.01, 0.99))))
            S = x_to_S(*x)
            for u, v in zip(x, S_to_x(*S)):
                worst = max(worst, abs(u - v) / abs(u))
            for u, v in zip(S, x_to_S(*S_to_x(*S))):
                worst = max(worst, abs(u - v) / abs(u))
    dt = time.perf_counter() - t
    assert report("coordinate round trip", worst <= mpfr("1e-40") and dt < 5, f"max rel error {float(worst):.3g} over 100 draws, {dt:.2f} s")


def test_fibonacci_combinatorics(f):
    t = time.perf_counter()
    rt = return_times(f, 12)
    q = golden_denominators(19)
    N = q[19]
    est = rotation_number(f, N)
    err = abs(est.value - golden_mean(f.precision))
    dt = time.perf_counter() - t
    ok = rt.times[:12] == q[1:13] and err <= mpfr("1e-6") and dt < 120
    assert report("Fibonacci combinatorics", ok, f"return times {rt.times[:12]}, |rho - golden| = {float(err):.3g} (N = {N}), {dt:.2f} s")


def test_dual_path(f):
    t = time.perf_counter()
    run = renormalize(f, 6)
    d = run.max_discrepancy(6)
    dt = time.perf_counter() - t
    assert report("renormalization dual path", d <= mpfr("1e-20") and dt < 300, f"max discrepancy levels 0..6 = {to_decimal(d, 3)} at {run.precision} bits, {dt:.2f} s")


def test_telescoping_identity(f, runs):
    t = time.perf_counter()
    run = runs["golden_base"]
    n = run.depth - 2
    rows = product_identity(f, n, run)
    by6 = all(r.gap <= mpfr("1e-3") for r in rows if r.level >= 6)
    mono = gap_non_increasing(rows, 3)
    # the literal left side |f(U) - f^{q_{n+1}+1}(U)| = |P_{n+1}|, for the record
    q = golden_denominators(8)
    o = critical_orbit(f, q[8])
    with working_precision(run.precision):
        literal = abs(abs(o[q[7]]) - rows[6].rhs) / rows[6].rhs
    dt = time.perf_counter() - t
    ok = by6 and mono and dt < 300
    detail = f"max gap over levels 6..{n} = {to_decimal(max(r.gap for r in rows[6:]), 3)}, non-increasing from 3: {mono}; literal-lhs gap at level 6 = {float(literal):.3g}; {dt:.2f} s"
    assert report("telescoping identity (R1)", ok, detail)


def test_lemma2_asymptotics(runs):
    t = time.perf_counter()
    rep = asymptotic_checks(runs["golden_base"])
    r = rep.checks["x2_over_x3"]
    e = rep.checks["lambda_u_estimators"]
    dt = time.perf_counter() - t
    ok = r["passed"] and e["passed"] and dt < 300
    detail = f"x2/x3 at level {r['level']} = {r['value']:.6f}; lambda_u {e['from_x2']:.6f} (x2) vs {e['from_gap']:.6f} (gap); {dt:.2f} s"
    assert report("Lemma 2 asymptotics", ok, detail)


def test_synthetic_recovery():
    t = time.perf_counter()
    m = SyntheticModel()
    tab = synthetic_table(m, 20)
    lu, _ = estimate_lambda_u(tab)
    ls, _ = estimate_lambda_s(tab)
    B, _ = estimate_cplus_sum(tab)
    dt = time.perf_counter() - t
    eu, es, eb = abs(lu - m.lambda_u), abs(ls - m.lambda_s), abs(B - m.cplus_sum)
    ok = eu <= 1e-6 and es <= 1e-6 and eb <= 1e-8 and dt < 10
    assert report("synthetic estimator recovery", ok, f"lambda_u err {eu:.2g}, lambda_s err {es:.2g}, c+ + c'+ err {eb:.2g}, {dt:.2f} s")


def test_conjugacy_self(f, runs):
    t = time.perf_counter()
    c = classify(f, f, depth=runs["golden_base"].depth, conj_depth=8, run_f=runs["golden_base"])
    rates = cauchy_rate(f, f, 8)
    exact = all(r == 1 for p in rates.profiles for r in p.ratios)
    dt = time.perf_counter() - t
    ok = c.verdict == C1 and exact and len(rates.profiles) == 8 and dt < 120
    assert report("conjugacy self-test", ok, f"verdict {c.verdict}, Dh_n == 1 exactly on levels 1..8: {exact}, {dt:.2f} s")


def test_discrimination(runs):
    t = time.perf_counter()
    names = list(runs)
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1 :]]
    cmps = {p: paired_comparison(runs[p[0]], runs[p[1]]) for p in pairs}
    a, b = max(pairs, key=lambda p: cmps[p].details.get("cplus_diff", -1.0))
    cmp = cmps[(a, b)]
    dB, Bf = cmp.details["cplus_diff"], cmp.details["cplus_f"]
    premise = dB > 10 * TOL_PLUS * abs(Bf)
    fa, fb = load_example(a), load_example(b)
    c = classify(fa, fb, depth=runs[a].depth, conj_depth=10, run_f=runs[a], run_g=runs[b])
    rates = [float(v) for v in cauchy_rate(fa, fb, 10).rates]
    no_decay = rates[-1] >= 0.1
    dt = time.perf_counter() - t
    ok = premise and c.verdict == NOT_C1 and no_decay and dt < 600
    Bs = "; ".join(
        f"{p[0]}/{p[1]}: " + (f"{cmps[p].details['cplus_f']:.5f} vs {cmps[p].details['cplus_g']:.5f}" if "cplus_f" in cmps[p].details else cmps[p].verdict)
        for p in pairs
    )
    detail = (
        f"c+ + c'+ with pooled rates [{Bs}]; widest pair {a}/{b} differs by {dB:.3g}, premise needs > {10 * TOL_PLUS * abs(Bf):.3g} ({premise}); "
        f"comparison {cmp.verdict} citing {cmp.details.get('mismatched')}; verdict {c.verdict}; last cauchy rate {rates[-1]:.3g}; {dt:.1f} s"
    )
    assert report("discrimination", ok, detail)


def _cli(args, out):
    r = subprocess.run([sys.executable, "-m", "flatrenorm.cli", *args, "--out", str(out)], capture_output=True)
    return r.returncode, out.read_bytes() if out.exists() else b""


def test_determinism(tmp_path):
    t = time.perf_counter()
    base = tmp_path / "base.json"
    obj = {k: v for k, v in json.loads(example_path("golden_base").read_text()).items() if k != "meta"}
    base.write_text(json.dumps(obj))
    plain = tmp_path / "plain.json"
    plain.write_text(json.dumps(dict(x1="-0.4", x2="0.2", x3="0.5", x4="0.7", s="0.5", ell1="1.4", ell2="1.7")))
    commands = {
        "validate": ["validate", str(base), "--grid", "512", "--samples", "8"],
        "tune": ["tune", str(plain), "--range", "0.536", "0.55", "--depth", "8"],
        "renorm": ["renorm", str(base), "--depth", "8"],
        "fingerprint": ["fingerprint", str(base), "--depth", "14"],
        "classify": ["classify", str(base), str(base), "--depth", "14", "--conj-depth", "6"],
    }
    same = {}
    for name, args in commands.items():
        a = _cli(args, tmp_path / f"{name}_a.out")
        b = _cli(args, tmp_path / f"{name}_b.out")
        same[name] = a == b and a[1] != b""
    dt = time.perf_counter() - t
    assert report("determinism", all(same.values()), f"byte-identical: {same}, {dt:.1f} s")
