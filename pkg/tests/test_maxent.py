import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from _problems import small_problems
from rotund.exceptions import DualDomainViolation, InfeasibleError, RankDeficientError
from rotund.integrands import catalog_get
from rotund.maxent import (MomentProblem, brute_force_primal, builtin_problems, dual_objective, load_problem,
                           recover_primal, solve, stability_run, trig_demo_problem)
from rotund.measure import MeasureSpace, TestFunctional as G, integral_functional, pair

PROBLEMS = small_problems()


def fd(x):
    return x * math.log(x) + (1 - x) * math.log(1 - x)


def test_builtin_catalogue():
    assert {"bs_mean", "bs_trig", "fd_window", "burg_cosine", "trig_demo", "bs_infeasible"} <= set(builtin_problems())


@pytest.mark.parametrize("name,expected", [
    ("bs_mean", -1.0),
    # x = 0.6 on [0, 1/4], 1/3 elsewhere
    ("fd_window", 0.25 * fd(0.6) + 0.75 * fd(1 / 3)),
])
def test_closed_form_values(name, expected):
    sol = solve(load_problem(f"builtin:{name}"))
    assert sol.converged
    assert sol.primal_value == pytest.approx(expected, abs=1e-12)
    assert abs(sol.duality_gap) <= 1e-12


def test_unconstrained_fermi_dirac():
    p = MomentProblem(catalog_get("fermi_dirac"), MeasureSpace.uniform((0, 1), 8), [], "free")
    sol = solve(p)
    assert sol.primal_value == pytest.approx(-math.log(2), abs=1e-15)
    np.testing.assert_allclose(sol.primal.values, 0.5)


@pytest.mark.parametrize("problem", PROBLEMS, ids=lambda p: p.label)
def test_solver_agrees_with_null_space_oracle(problem):
    sol = solve(problem)
    bf = brute_force_primal(problem)
    assert sol.converged
    assert abs(sol.primal_value - bf.value) <= 1e-9
    assert abs(sol.duality_gap) <= 1e-10
    assert np.max(np.abs(sol.constraint_residuals)) <= 1e-10
    assert bf.kkt_residual <= 1e-8


def slsqp_value(problem):
    """Independent oracle: direct constrained minimisation with SLSQP."""
    phi = problem.integrand
    w = problem.space.weights
    A = problem.moment_tensor()[:, :, 0] * w
    lo, hi = phi.domain.sampling_box()
    bounds = [(max(lo[0], 0.0) + 1e-12, min(hi[0], 1e6) - (1e-12 if math.isfinite(phi.domain.hi[0]) else 0))] * len(w)
    x0 = np.full(len(w), 0.5 if phi.name == "fermi_dirac" else 1.0)
    res = minimize(lambda v: float(np.dot(w, phi.value(v))), x0,
                   jac=lambda v: w * phi.grad(v), method="SLSQP", bounds=bounds,
                   constraints=[{"type": "eq", "fun": lambda v: A @ v - problem.targets, "jac": lambda v: A}],
                   options={"ftol": 1e-14, "maxiter": 1000})
    assert res.success, res.message
    return res.fun


@pytest.mark.parametrize("problem", [p for p in PROBLEMS if p.space.n_cells <= 32], ids=lambda p: p.label)
def test_solver_agrees_with_slsqp(problem):
    assert solve(problem).primal_value == pytest.approx(slsqp_value(problem), abs=1e-7)


def test_dual_gradient_is_exact_residual():
    p = PROBLEMS[1]
    lam = np.array([0.1, -0.3, 0.2])
    ev = dual_objective(p, lam)
    x = recover_primal(p, lam)
    residual = np.array([pair(x, g) for g, _ in p.constraints]) - p.targets
    # the dual is <lam, b> - I_phi*(A^T lam), so its gradient is b - <x, g>
    np.testing.assert_allclose(ev.gradient, -residual, atol=1e-13)
    # finite-difference check of the dual gradient
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fdg = (dual_objective(p, lam + e, hessian=False).value - dual_objective(p, lam - e, hessian=False).value) / (2 * h)
        assert fdg == pytest.approx(ev.gradient[j], abs=1e-7)


def test_weak_duality_on_random_multipliers():
    p = PROBLEMS[3]
    sol = solve(p)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert dual_objective(p, rng.normal(size=p.m), hessian=False).value <= sol.primal_value + 1e-12


def test_burg_cosine_problem():
    p = load_problem("builtin:burg_cosine")
    sol = solve(p)
    assert sol.converged and abs(sol.duality_gap) < 1e-10
    assert np.all(sol.primal.values > 0)
    with pytest.raises(DualDomainViolation):
        dual_objective(p, np.array([1.0, 0.0]))


def test_rank_deficient_constraints():
    bs = catalog_get("boltzmann_shannon")
    p = MomentProblem(bs, MeasureSpace.uniform((0, 1), 16), [(G.constant(1.0), 1.0), (G.constant(2.0), 3.0)])
    with pytest.raises(RankDeficientError):
        solve(p)


@pytest.mark.parametrize("source", ["builtin:bs_infeasible", None])
def test_infeasible_problems(source):
    if source is None:
        p = MomentProblem(catalog_get("fermi_dirac"), MeasureSpace.uniform((0, 1), 16), [(G.constant(1.0), 2.0)])
    else:
        p = load_problem(source)
    with pytest.raises(InfeasibleError):
        solve(p)
    with pytest.raises(InfeasibleError):
        brute_force_primal(p)


def test_gradient_method_matches_newton():
    p = PROBLEMS[2]
    a = solve(p, method="newton")
    b = solve(p, method="gradient", max_iter=20000)
    assert b.converged
    assert a.primal_value == pytest.approx(b.primal_value, abs=1e-9)


def test_problem_json_round_trip(tmp_path):
    for p in PROBLEMS:
        path = tmp_path / f"{p.label}.json"
        path.write_text(json.dumps(p.to_dict()))
        q = load_problem(str(path))
        assert q.space.same_partition(p.space)
        assert solve(q).primal_value == pytest.approx(solve(p).primal_value, abs=1e-13)


def test_trig_demo_stability():
    rep = stability_run(trig_demo_problem(), range(13))
    assert rep.monotone
    d = {r.n: r.l1_to_limit for r in rep.rows}
    assert d[1] / d[8] >= 10
    assert d[12] == 0.0
    assert [r.l1_to_limit for r in rep.rows][1:] == sorted([r.l1_to_limit for r in rep.rows][1:], reverse=True)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=2, max_size=6, unique=True), st.floats(1.05, 3.0))
def test_values_nondecreasing_along_nested_schedules(schedule, a):
    rep = stability_run(trig_demo_problem(8, 32, a), schedule, strict=False)
    assert rep.monotone, rep.violations
    vals = [r.value for r in rep.rows]
    assert all(b >= c - 1e-9 for c, b in zip(vals, vals[1:]))


def test_primal_is_feasible_and_optimal():
    p = PROBLEMS[4]
    sol = solve(p)
    assert integral_functional(p.integrand, sol.primal) == pytest.approx(sol.primal_value, abs=1e-14)
    for (g, b) in p.constraints:
        assert pair(sol.primal, g) == pytest.approx(b, abs=1e-12)
