"""The seven acceptance criteria at their stated tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line; the terminal summary
repeats them.
"""
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _problems import small_problems
from rotund import watson as W
from rotund.exceptions import HypothesisViolation
from rotund.integrands import CATALOG_NAMES, catalog_get, quartic_root_product
from rotund.lab import family, preservation_check_I, preservation_check_II, run
from rotund.maxent import brute_force_primal, solve, stability_run, trig_demo_problem
from rotund.measure import deviation_measure, integral_functional
from rotund.probes import (fenchel_young_check, gradient_check, level_set_compactness_probe,
                           numeric_conjugate_check, strict_convexity_transfer)

ALPHA_BAR = 0.340537329550999142833


def test_criterion_1_watson_threshold(record):
    W.alpha_bar.cache_clear()
    t0 = time.perf_counter()
    a = W.alpha_bar()
    elapsed = time.perf_counter() - t0
    diffs = {w: abs(W.watson(w) - W.watson_cube(w)) for w in (0.0, 0.25, 0.5, 0.75, 0.99)}
    ok = abs(a - ALPHA_BAR) <= 1e-9 and elapsed <= 5.0 and max(diffs.values()) <= 1e-6
    record(1, ok, f"|alpha - ref| = {abs(a - ALPHA_BAR):.1e}, {elapsed:.3f} s, "
                  f"max route difference {max(diffs.values()):.1e}")
    assert ok


def test_criterion_2_golden_numbers(record):
    burg, bpl = catalog_get("burg"), catalog_get("burg_plus_linear")
    ex, inc = family("exlbr2"), family("incompat")
    err, times = 0.0, []
    for fam, phi in ((ex, burg), (inc, bpl)):
        t0 = time.perf_counter()
        rep = run(fam, phi)
        times.append(time.perf_counter() - t0)
        for row in rep.rows:
            n = row.n
            ref = (-math.log(n) / (1 + math.log(n)) if fam is ex else -math.log(n) / n + 2 - 1 / n)
            err = max(err, abs(row.value - ref))
    dev_inc = max(abs(deviation_measure(inc(n), inc.limit, 0.5) - 1 / n) for n in (10, 100, 10_000))
    dev_ex = min(deviation_measure(ex(n), ex.limit, 0.5) for n in (10, 100, 10_000))
    limit_ok = integral_functional(bpl, inc.limit) == 1.0
    ok = err <= 1e-12 and dev_inc <= 1e-12 and dev_ex >= 0.5 and max(times) <= 1.0 and limit_ok
    gap = abs(integral_functional(bpl, inc(10_000)) - 2.0)
    record(2, ok and gap <= 1e-3,
           f"golden numbers and deviations pass (closed-form error {err:.1e}, deviation 1/n error {dev_inc:.1e}, exlbr2 deviation {dev_ex:.2f}, "
           f"{max(times):.3f} s/family); limit gap |I - 2| at n = 1e4 is {gap:.4e} > 1e-3, "
           f"which the closed form log(n)/n + 1/n forces")
    assert ok


@pytest.mark.xfail(strict=True, reason="closed form gives |I - 2| = log(n)/n + 1/n = 1.021e-3 at n = 1e4")
def test_criterion_2_limit_gap_at_1e4():
    bpl, inc = catalog_get("burg_plus_linear"), family("incompat")
    gap = abs(integral_functional(bpl, inc(10_000)) - 2.0)
    assert gap == pytest.approx(math.log(1e4) / 1e4 + 1e-4, abs=1e-15)
    assert gap <= 1e-3


def test_criterion_3_duality_oracle(record):
    problems = [p for p in small_problems() if p.space.n_cells <= 64]
    assert len(problems) >= 5
    worst = {"dV": 0.0, "gap": 0.0, "res": 0.0, "time": 0.0}
    for p in problems:
        t0 = time.perf_counter()
        sol = solve(p)
        worst["time"] = max(worst["time"], time.perf_counter() - t0)
        bf = brute_force_primal(p)
        worst["dV"] = max(worst["dV"], abs(sol.primal_value - bf.value))
        worst["gap"] = max(worst["gap"], abs(sol.duality_gap))
        worst["res"] = max(worst["res"], float(np.max(np.abs(sol.constraint_residuals))))
    ok = worst["dV"] <= 1e-5 and worst["gap"] <= 1e-6 and worst["res"] <= 1e-8 and worst["time"] <= 1.0
    record(3, ok, f"{len(problems)} problems: max |V - V_oracle| {worst['dV']:.1e}, gap {worst['gap']:.1e}, "
                  f"residual {worst['res']:.1e}, slowest solve {worst['time']:.3f} s")
    assert ok


@settings(max_examples=10, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=2, max_size=7, unique=True))
def test_criterion_4_nested_schedules_property(schedule):
    rep = stability_run(trig_demo_problem(), schedule, tol=1e-9, strict=False)
    assert rep.monotone, rep.violations


def test_criterion_4_stability(record):
    rep = stability_run(trig_demo_problem(), range(13), tol=1e-9, strict=False)
    dist = {r.n: r.l1_to_limit for r in rep.rows}
    others = [stability_run(p, range(p.m + 1), tol=1e-9, strict=False).monotone
              for p in small_problems()]
    factor = dist[1] / dist[8]
    ok = rep.monotone and all(others) and factor >= 10
    record(4, ok, f"monotone on trig demo and {len(others)} other problems; "
                  f"|x1 - x_inf| / |x8 - x_inf| = {factor:.1f}")
    assert ok


def test_criterion_5_conjugate_gradient_suite(record):
    t0 = time.perf_counter()
    worst = {"fy": 0.0, "grad": 0.0, "conj": 0.0}
    failures = []
    for name in CATALOG_NAMES:
        for d in ((3, 6) if name == "log_det" else (1, 2)):
            phi = catalog_get(name, d)
            checks = [("grad", gradient_check)]
            if phi.has_conjugate:
                checks += [("fy", fenchel_young_check), ("conj", numeric_conjugate_check)]
            for key, check in checks:
                r = check(phi)
                if not r.passed:
                    failures.append((name, d, key))
                err = r.witness.get("max_equality_residual" if key == "fy" else "rel_error", 0.0)
                worst[key] = max(worst[key], err)
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed <= 30.0 and worst["fy"] <= 1e-10 and worst["grad"] <= 1e-6 \
        and worst["conj"] <= 1e-3
    record(5, ok, f"{len(CATALOG_NAMES)} entries: FY {worst['fy']:.1e}, gradient {worst['grad']:.1e}, "
                  f"numeric conjugate {worst['conj']:.1e}, {elapsed:.1f} s, failures {failures}")
    assert ok


def test_criterion_6_preservation(record):
    phi = catalog_get("clipped_norm")
    fams = [family("spike_preservation"),
            family("rademacher", center=0.3, amplitude=0.01, decay=True)]
    rows, passed = 0, True
    for fam in fams:
        for check in (preservation_check_I, preservation_check_II):
            rep = check(phi, fam)
            passed = passed and rep.passed
            for row in rep.rows:
                metric = row["composition"] if rep.kind == "I" else row["value_gap"]
                passed = passed and metric <= row["bound"] * (1 + 1e-12)
                rows += 1
    refused = 0
    for check in (preservation_check_I, preservation_check_II):
        try:
            check(catalog_get("burg"), fams[0])
        except HypothesisViolation:
            refused += 1
    ok = passed and refused == 2
    record(6, ok, f"{rows} rows within 2 M mu(T_eps) + delta eps mu(S); Burg refused by {refused}/2 checks")
    assert ok


def test_criterion_7_non_compactness(record):
    r = level_set_compactness_probe(catalog_get("burg"), 0.0, family("burg_level_escape"))
    w = r.witness
    weak_ok = all(g >= 1 - 1 / n - 1e-12 for n, g in zip(w["n"], w["weak_gap_per_candidate"][0]))
    level_ok = all(v <= 0 for v in w["I"]) and all(m <= 2 for m in w["l1_norm"])
    sc = strict_convexity_transfer(quartic_root_product())
    ok = r.status == "witnessed" and weak_ok and level_ok and sc.status == "failed" and bool(sc.witness)
    record(7, ok, f"level-set probe: {r.status} (max I {max(w['I']):.3g}, max |x_n|_1 {max(w['l1_norm']):.4g}); "
                  f"strict convexity on -(xy)^(1/4): {sc.status}")
    assert ok
