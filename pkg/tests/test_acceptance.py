"""Acceptance checks; each test prints one PASS/FAIL line.

Criteria 3 to 6 share one seeded Monte Carlo campaign on the literal
two-mass-spring scenario (1000 runs per method, base seed 0).
"""

import os
import time

import numpy as np
import pytest

from drsmpc.cli import main
from drsmpc.errors import InitialInfeasible, TighteningInfeasible
from drsmpc.linalg import synthesize
from drsmpc.ocp import OcpBuilder
from drsmpc.scenarios import buck_boost, two_mass_spring
from drsmpc.sim import cost_decrease_gaps, feasible_set_scan, monte_carlo
from drsmpc.tightening import slab_radius_cantelli, slab_radius_dr, worst_case_violation

from conftest import random_instance

MC_RUNS = 1000
MC_SEED = 0
JOBS = os.cpu_count() or 1


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}")
        assert ok, detail
    return _report


@pytest.fixture(scope="module")
def campaign():
    sc = two_mass_spring()
    out = {}
    for method in ("gauss", "dr", "cantelli"):
        try:
            out[method] = monte_carlo(sc, method, MC_RUNS, MC_SEED, JOBS)
        except InitialInfeasible as exc:
            out[method] = exc
    return sc, out


def test_criterion_01_terminal_weight(report):
    sc = buck_boost()
    t0 = time.perf_counter()
    art = synthesize(sc.model, sc.cost, K=np.array([[-0.28, 0.49]]))
    dt = time.perf_counter() - t0
    ref = np.array([[1.90, -5.05], [-5.05, 39.54]])
    err = float(np.abs(art.S - ref).max())
    report(1, "terminal weight", err <= 0.05 and dt < 1.0,
           f"max |S - S_pub| = {err:.4f} (tol 0.05), {dt * 1e3:.1f} ms")


def test_criterion_02_feasible_set_ratio(report):
    sc = buck_boost()
    art = sc.synthesize()
    areas = {m: feasible_set_scan(sc, m, artifacts=art).area for m in ("dr", "cantelli", "gauss")}
    ratio = areas["dr"] / areas["cantelli"]
    ok = abs(ratio - 1.15) <= 0.10 and areas["gauss"] >= areas["dr"]
    report(2, "feasible-set ratio", ok,
           f"area dr/cantelli = {ratio:.4f} (1.15 +/- 0.10), gauss {areas['gauss']:.4f} >= dr {areas['dr']:.4f}")


def _count(res):
    return res.stats.maxCount if not isinstance(res, Exception) else None


def test_criterion_03_violation_ordering(report, campaign):
    _, res = campaign
    g, d, c = (_count(res[m]) for m in ("gauss", "dr", "cantelli"))
    slack = 0.20 + 3 * np.sqrt(0.2 * 0.8 / MC_RUNS)
    ok_g = g is not None and g >= 300
    ok_d = d is not None and 80 <= d <= 220 and np.all(res["dr"].stats.anyCounts / MC_RUNS <= slack)
    ok_c = c is not None and c <= 60

    def show(name, n):
        return f"{name} {n}/{MC_RUNS}" if n is not None else f"{name} not run ({res[name]})"

    report(3, "Monte Carlo violation ordering", ok_g and ok_d and ok_c,
           "; ".join(show(m, n) for m, n in (("gauss", g), ("dr", d), ("cantelli", c))))


def test_criterion_04_recursive_feasibility(report, campaign):
    _, res = campaign
    ran = {m: r for m, r in res.items() if not isinstance(r, Exception)}
    term = {m: len(r.terminated) for m, r in ran.items()}
    skipped = sorted(set(res) - set(ran))
    detail = ", ".join(f"{m} {n}/{MC_RUNS} BothInfeasible" for m, n in term.items())
    if skipped:
        detail += f"; no runs for {', '.join(skipped)} (initial program infeasible)"
    report(4, "recursive feasibility", sum(term.values()) == 0 and not skipped, detail)


def test_criterion_05_cost_decrease(report, campaign):
    sc, res = campaign
    worst, steps = -np.inf, 0
    for r in res.values():
        if isinstance(r, Exception):
            continue
        for rec in r.records:
            for _, gap in cost_decrease_gaps(rec, sc, r.artifacts):
                worst = max(worst, gap)
                steps += 1
    skipped = [m for m, r in res.items() if isinstance(r, Exception)]
    ok = steps > 0 and worst <= 1e-6 and not skipped
    detail = f"{steps} Strategy-2 steps checked, max slack {worst:.3g} (<= 1e-6)"
    if skipped:
        detail += f"; no runs for {', '.join(skipped)}"
    report(5, "cost decrease", ok, detail)


def test_criterion_06_long_run_cost(report, campaign):
    _, res = campaign
    r = res["dr"]
    if isinstance(r, Exception):
        report(6, "long-run cost bound", False, f"DR controller not run ({r})")
    tail = r.mean_terminal_cost(20)
    report(6, "long-run cost bound", tail <= 1.1 * r.traceSW,
           f"mean stage cost (last 20 steps) {tail:.4f} vs 1.1 tr(SW) = {1.1 * r.traceSW:.4f}")


def test_criterion_07_oracle_exactness(report):
    rng = np.random.default_rng(7)
    worst = 0.0
    bad = []
    for _ in range(50):
        p = rng.uniform(0.05, 0.5)
        b = rng.uniform(0.2, 5.0)
        s2 = rng.uniform(0.01, 0.95) * p * b * b
        r = slab_radius_dr(s2, b, p)
        v = worst_case_violation(r - 1e-4, s2, b)
        worst = max(worst, abs(v - p))
        if not (p - 0.02 <= v <= p + 5e-3):
            bad.append((s2, b, p, v))
    report(7, "reformulation exactness", not bad,
           f"50 triples, max |worst-case - p| = {worst:.2e}, {len(bad)} outside [p-0.02, p+5e-3]")


def test_criterion_08_form_equivalence(report):
    rng = np.random.default_rng(8)
    mismatch = 0
    feasible = 0
    worst = 0.0
    for _ in range(200):
        model, cost, cons, x0 = random_instance(rng)
        art = synthesize(model, cost)
        a = OcpBuilder(model, cost, cons, art, "dr", "conic").solve(x0)
        b = OcpBuilder(model, cost, cons, art, "dr", "condensed").solve(x0)
        if a.status != b.status:
            mismatch += 1
            continue
        if a.feasible:
            feasible += 1
            rel = abs(a.cost - b.cost) / max(1.0, abs(b.cost))
            worst = max(worst, rel)
            if rel > 1e-5:
                mismatch += 1
    report(8, "form equivalence", mismatch == 0,
           f"200 instances ({feasible} feasible), {mismatch} mismatches, max rel cost gap {worst:.2e}")


def test_criterion_09_conservatism(report):
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(1000):
        p = rng.uniform(0.01, 0.6)
        b = rng.uniform(0.1, 10.0)
        s2 = rng.uniform(0.0, 1.0) * p * b * b
        rd = slab_radius_dr(s2, b, p)
        try:
            rc = slab_radius_cantelli(s2, b, p)
        except TighteningInfeasible:
            rc = -np.inf
        if not (rc <= rd <= b):
            bad += 1
    report(9, "conservatism ordering", bad == 0, f"1000 triples, {bad} exceptions")


def test_criterion_10_determinism(report, tmp_path, capsys):
    args = ["simulate", "--scenario", "builtin:buck_boost", "--method", "dr", "--runs", "20",
            "--steps", "20", "--seed", "3", "--jobs", str(JOBS)]
    codes = [main(args + ["--out", str(tmp_path / d)]) for d in ("a", "b")]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("runs.csv", "stats.csv", "summary.txt"))
    report(10, "determinism", codes == [0, 0] and same,
           f"exit codes {codes}, outputs {'byte-identical' if same else 'differ'}")
