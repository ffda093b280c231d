"""Moment-constrained entropy minimisation through the concave dual.

Problem: minimise I_phi(x) over simple functions x subject to
<a_i, x> = b_i, i = 1..m.  The dual

    D(lam) = lam . b - sum_c mu_c phi*(A_c lam)

is maximised by damped Newton ascent, where A_c lam = sum_i lam_i a_i
averaged over cell c.  Using exact cell averages makes the dual gradient
equal to the exact constraint residual of the recovered primal
x_c = grad phi*(A_c lam).

``brute_force_primal`` solves the same finite problem on the primal side
(Newton in the null space of the constraints, using phi' and phi'' only)
and serves as an independent oracle.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from .exceptions import (ConvergenceError, DimensionError, DualDomainViolation, InfeasibleError,
                         NoConjugateError, RankDeficientError)
from .integrands import Integrand, SeparableIntegrand, ScalarIntegrand, catalog_get
from .measure import MeasureSpace, SimpleFunction, TestFunctional, fsum, integral_functional, l1_distance, pair

DIVERGENCE = 1e8
MAX_ITER = 200
GRAD_TOL = 1e-12


@dataclass
class MomentProblem:
    integrand: Integrand
    space: MeasureSpace
    constraints: list = field(default_factory=list)
    label: str = "problem"

    def __post_init__(self):
        self.constraints = [(g, float(b)) for g, b in self.constraints]
        for g, b in self.constraints:
            if not math.isfinite(g.bound) or not math.isfinite(b):
                raise ValueError("constraint functionals and targets must be finite")
        self._A = None

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def targets(self) -> np.ndarray:
        return np.array([b for _, b in self.constraints], dtype=float)

    def moment_tensor(self) -> np.ndarray:
        """Cell averages of every constraint functional, shape (m, cells, d)."""
        if self._A is None:
            d = self.integrand.dimension
            if self.m == 0:
                self._A = np.zeros((0, self.space.n_cells, d))
            else:
                self._A = np.stack([g.cell_averages(self.space, d) for g, _ in self.constraints])
        return self._A

    def truncated(self, n: int) -> "MomentProblem":
        """P_n: the first ``n`` constraints."""
        return MomentProblem(self.integrand, self.space, self.constraints[:n], f"{self.label}[:{n}]")

    def on_grid(self, space: MeasureSpace) -> "MomentProblem":
        return MomentProblem(self.integrand, space, self.constraints, self.label)

    def to_dict(self) -> dict:
        integ = {"name": self.integrand.name, "d": self.integrand.dimension}
        if "p" in self.integrand.params:
            integ["p"] = self.integrand.params["p"]
        out = {
            "label": self.label,
            "integrand": integ,
            "box": [list(b) for b in self.space.box],
            "cells": list(self.space.shape),
            "constraints": [{**g.to_dict(), "b": b} for g, b in self.constraints],
        }
        if not _is_uniform(self.space):
            out["edges"] = [e.tolist() for e in self.space.edges]
        if not self.space.lebesgue:
            out["weights"] = self.space.weights.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MomentProblem":
        spec = data["integrand"]
        if isinstance(spec, str):
            spec = {"name": spec}
        phi = catalog_get(spec["name"], spec.get("d", 1), p=spec.get("p"))
        if "edges" in data:
            space = MeasureSpace(data["edges"], data.get("weights"))
        else:
            space = MeasureSpace.uniform(data.get("box", (0.0, 1.0)), data.get("cells", 64))
            if data.get("weights") is not None:
                space = MeasureSpace(space.edges, data["weights"])
        cons = [(TestFunctional.from_dict(c), c["b"]) for c in data.get("constraints", [])]
        return cls(phi, space, cons, data.get("label", "problem"))


def _is_uniform(space: MeasureSpace) -> bool:
    return all(np.allclose(np.diff(e), (e[-1] - e[0]) / (e.size - 1), rtol=1e-12, atol=0) for e in space.edges)


def load_problem(source: str) -> MomentProblem:
    """Read a problem from a JSON path, or ``builtin:<name>`` for shipped files."""
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        text = resources.files("rotund").joinpath("problems", f"{name}.json").read_text()
    else:
        with open(source) as fh:
            text = fh.read()
    return MomentProblem.from_dict(json.loads(text))


def builtin_problems() -> list:
    root = resources.files("rotund").joinpath("problems")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def trig_demo_problem(n_constraints: int = 12, cells: int = 128, a: float = 1.2) -> MomentProblem:
    """Boltzmann-Shannon on [0,1] with the cosine moments of p(s) ∝ 1/(a - cos 2 pi s).

    With r = a - sqrt(a^2 - 1) the normalised target has <1, p> = 1 and
    <cos 2 pi k s, p> = r^k.  It is smooth but not of exponential-family form,
    so every truncation P_n leaves a nonzero residual error.
    """
    r = a - math.sqrt(a * a - 1.0)
    cons = [(TestFunctional.constant(1.0), 1.0)]
    cons += [(TestFunctional.trig(k), r ** k) for k in range(1, n_constraints)]
    space = MeasureSpace.uniform((0.0, 1.0), cells)
    return MomentProblem(catalog_get("boltzmann_shannon"), space, cons, "trig_demo")


# ---------------------------------------------------------------------------
# dual


class DualEval(NamedTuple):
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    hessian_exact: bool


def _require_dual(problem: MomentProblem):
    phi = problem.integrand
    if not phi.has_conjugate:
        raise NoConjugateError(f"{phi.name} has no conjugate; the dual path is unavailable")


def _dual_points(problem: MomentProblem, lam) -> np.ndarray:
    A = problem.moment_tensor()
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (problem.m,):
        raise DimensionError(f"need {problem.m} multipliers, got shape {lam.shape}")
    return np.einsum("i,icd->cd", lam, A)


def _fd_conj_hess(phi: Integrand, Y: np.ndarray) -> np.ndarray:
    n, d = Y.shape
    H = np.empty((n, d, d))
    h = 1e-6 * (1.0 + np.abs(Y))
    for j in range(d):
        step = np.zeros_like(Y)
        step[:, j] = h[:, j]
        gp = np.asarray(phi.conj_grad(Y + step)).reshape(n, d)
        gm = np.asarray(phi.conj_grad(Y - step)).reshape(n, d)
        H[:, :, j] = (gp - gm) / (2.0 * h[:, j:j + 1])
    return 0.5 * (H + np.transpose(H, (0, 2, 1)))


def dual_objective(problem: MomentProblem, lam, *, hessian: bool = True) -> DualEval:
    """Dual value, gradient (= b minus primal moments) and Hessian at ``lam``.

    Raises :class:`DualDomainViolation` naming the first cell whose dual
    point lies outside dom phi*.
    """
    _require_dual(problem)
    phi, space = problem.integrand, problem.space
    A = problem.moment_tensor()
    lam = np.asarray(lam, dtype=float)
    Y = _dual_points(problem, lam)
    inside = phi.conj_domain.interior_contains(Y)
    if not inside.all():
        cell = int(np.flatnonzero(~inside)[0])
        raise DualDomainViolation(
            f"dual point {Y[cell].tolist()} of cell {cell} is outside the conjugate domain", cell=cell)
    w = space.weights
    cv = np.asarray(phi.conj_value(Y), dtype=float).reshape(-1)
    value = math.fsum([float(lam @ problem.targets), -fsum(w * cv)]) if problem.m else -fsum(w * cv)
    X = np.asarray(phi.conj_grad(Y), dtype=float).reshape(Y.shape)
    moments = np.array([fsum(w * np.sum(A[i] * X, axis=1)) for i in range(problem.m)])
    grad = problem.targets - moments
    if not hessian:
        return DualEval(value, grad, np.zeros((problem.m, problem.m)), True)
    exact = phi.has_conj_hess
    Hc = (np.asarray(phi.conj_hess(Y)).reshape(Y.shape[0], Y.shape[1], Y.shape[1])
          if exact else _fd_conj_hess(phi, Y))
    # -sum_c w_c A_ic^T H_c A_jc
    HA = np.einsum("cde,jce->jcd", Hc, A)
    H = -np.einsum("c,icd,jcd->ij", w, A, HA)
    return DualEval(value, grad, 0.5 * (H + H.T), exact)


def recover_primal(problem: MomentProblem, lam) -> SimpleFunction:
    Y = _dual_points(problem, lam)
    X = np.asarray(problem.integrand.conj_grad(Y), dtype=float).reshape(Y.shape)
    return SimpleFunction(problem.space, X)


# ---------------------------------------------------------------------------
# solver


@dataclass
class PrimalDualSolution:
    multipliers: np.ndarray
    primal: SimpleFunction
    dual_value: float
    primal_value: float
    constraint_residuals: np.ndarray
    iterations: int
    converged: bool
    gradient_norm: float = math.nan
    method: str = "newton"
    discretization_gap: float = 0.0
    message: str = ""

    @property
    def lambda_(self) -> np.ndarray:
        return self.multipliers

    @property
    def value(self) -> float:
        return self.primal_value

    @property
    def duality_gap(self) -> float:
        return self.primal_value - self.dual_value

    def to_dict(self) -> dict:
        return {
            "lambda": self.multipliers.tolist(),
            "V": self.primal_value,
            "dual_value": self.dual_value,
            "duality_gap": self.duality_gap,
            "residuals": self.constraint_residuals.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "method": self.method,
            "discretization_gap": self.discretization_gap,
            "message": self.message,
        }


def _check_rank(problem: MomentProblem):
    if problem.m == 0:
        return
    A = problem.moment_tensor()
    M = (A * np.sqrt(problem.space.weights)[None, :, None]).reshape(problem.m, -1)
    rank = np.linalg.matrix_rank(M)
    if rank < problem.m:
        raise RankDeficientError(
            f"constraint functionals are linearly dependent on this grid (rank {rank} < {problem.m})")


def _feasible_start(problem: MomentProblem) -> np.ndarray:
    """A multiplier vector with every dual point strictly inside dom phi*."""
    lam = np.zeros(problem.m)
    phi = problem.integrand
    if phi.conj_domain.kind == "all_space" or phi.conj_domain.interior_contains(_dual_points(problem, lam)).all():
        return lam
    cd = phi.conj_domain
    if cd.kind not in ("open_box", "closed_box") or problem.m == 0:
        raise DualDomainViolation("no strictly feasible dual start is available", cell=0)
    A = problem.moment_tensor().reshape(problem.m, -1).T  # (cells*d, m)
    lo = np.tile(np.array(cd.lo), problem.space.n_cells)
    hi = np.tile(np.array(cd.hi), problem.space.n_cells)
    # maximise t with lo + t <= A lam <= hi - t, t <= 1
    rows, rhs = [], []
    for k in range(A.shape[0]):
        if math.isfinite(hi[k]):
            rows.append(np.append(A[k], 1.0))
            rhs.append(hi[k])
        if math.isfinite(lo[k]):
            rows.append(np.append(-A[k], 1.0))
            rhs.append(-lo[k])
    c = np.zeros(problem.m + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * problem.m + [(None, 1.0)]
    res = optimize.linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    if res.status != 0 or res.x[-1] <= 0:
        raise DualDomainViolation("no strictly feasible dual start exists for these constraints", cell=0)
    return res.x[:-1]


def _safe_eval(problem, lam, hessian=True) -> Optional[DualEval]:
    try:
        ev = dual_objective(problem, lam, hessian=hessian)
    except DualDomainViolation:
        return None
    if not (math.isfinite(ev.value) and np.all(np.isfinite(ev.gradient))):
        return None
    return ev


def _midpoint_gap(problem: MomentProblem, x: SimpleFunction) -> float:
    gap = 0.0
    mids = problem.space.midpoints
    for g, _ in problem.constraints:
        if g.kind != "trig":
            continue
        sampled = g.evaluate(mids)[:, None] * g._dir(x.d)
        approx = fsum(problem.space.weights * np.sum(x.values * sampled, axis=1))
        gap = max(gap, abs(approx - pair(x, g)))
    return gap


def solve(problem: MomentProblem, *, lam0=None, tol: float = GRAD_TOL, max_iter: Optional[int] = None,
          method: str = "auto", divergence: float = DIVERGENCE, strict: bool = False) -> PrimalDualSolution:
    """Maximise the dual; recover the primal from the optimal multipliers.

    ``method`` is ``"newton"``, ``"gradient"`` (Barzilai-Borwein ascent) or
    ``"auto"``, which uses Newton only when phi* has a closed-form Hessian.
    Raises :class:`InfeasibleError` when the multipliers diverge, and with
    ``strict=True`` :class:`ConvergenceError` when the iteration cap is hit.
    """
    _require_dual(problem)
    _check_rank(problem)
    if method == "auto":
        method = "newton" if problem.integrand.has_conj_hess else "gradient"
    if method not in ("newton", "gradient"):
        raise ValueError(f"unknown method {method!r}")
    if max_iter is None:
        max_iter = MAX_ITER if method == "newton" else 50 * MAX_ITER
    lam = _feasible_start(problem) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    ev = _safe_eval(problem, lam, hessian=method == "newton")
    if ev is None:
        raise DualDomainViolation("starting multipliers are outside the dual domain", cell=0)

    step = _newton_step if method == "newton" else _bb_step
    state: dict = {}
    converged, message, it = False, "iteration cap reached", 0
    for it in range(1, max_iter + 1):
        if problem.m == 0 or np.max(np.abs(ev.gradient)) <= tol:
            converged, message, it = True, "gradient tolerance met", it - 1
            break
        new = step(problem, lam, ev, state)
        if new is None:
            message = "line search failed"
            break
        lam, ev = new
        if np.linalg.norm(lam) > divergence:
            raise InfeasibleError(
                f"dual multipliers diverged (|lam| > {divergence:g}); the moment constraints are infeasible")
    else:
        converged = problem.m == 0 or np.max(np.abs(ev.gradient)) <= tol
        message = "gradient tolerance met" if converged else message
        it = max_iter

    x = recover_primal(problem, lam)
    residuals = np.array([pair(x, g) - b for g, b in problem.constraints])
    sol = PrimalDualSolution(
        multipliers=lam, primal=x, dual_value=ev.value,
        primal_value=integral_functional(problem.integrand, x),
        constraint_residuals=residuals, iterations=it, converged=converged,
        gradient_norm=float(np.max(np.abs(ev.gradient))) if problem.m else 0.0,
        method=method, discretization_gap=_midpoint_gap(problem, x), message=message)
    if strict and not converged:
        raise ConvergenceError(f"{problem.label}: {message} after {it} iterations")
    return sol


def _newton_step(problem, lam, ev: DualEval, state):
    g = ev.gradient
    N = -ev.hessian
    reg = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(N)))))
    for _ in range(12):
        try:
            c = linalg.cho_factor(N + reg * np.eye(len(g)))
            direction = linalg.cho_solve(c, g)
            break
        except linalg.LinAlgError:
            reg = max(1e-12 * scale, 10.0 * reg)
    else:
        direction = g.copy()
    slope = float(g @ direction)
    t = 1.0
    gnorm = np.linalg.norm(g)
    first = None
    while t > 1e-14:
        trial = lam + t * direction
        new = _safe_eval(problem, trial)
        if new is not None:
            if first is None:
                first = (trial, new)
            slack = 1e-15 * (1.0 + abs(ev.value))
            if new.value >= ev.value + 1e-4 * t * slope - slack:
                return trial, new
        t *= 0.5
    # near the optimum the value is flat to rounding; accept a step that still shrinks the gradient
    if first is not None and np.linalg.norm(first[1].gradient) < gnorm:
        return first
    return None


def _bb_step(problem, lam, ev: DualEval, state):
    g = ev.gradient
    if "prev" in state:
        s = lam - state["prev"][0]
        yv = g - state["prev"][1]
        sy = float(s @ yv)
        alpha = abs(float(s @ s) / sy) if sy != 0 else state["alpha"]
    else:
        alpha = 1.0 / max(1.0, float(np.linalg.norm(g)))
    gg = float(g @ g)
    t = alpha
    while t > 1e-16:
        trial = lam + t * g
        new = _safe_eval(problem, trial, hessian=False)
        if new is not None and new.value >= ev.value + 1e-4 * t * gg - 1e-15 * (1.0 + abs(ev.value)):
            state["prev"] = (lam, g)
            state["alpha"] = t
            return trial, new
        t *= 0.5
    return None


# ---------------------------------------------------------------------------
# primal oracle


def _scalar_component(phi: Integrand):
    if isinstance(phi, ScalarIntegrand):
        return phi
    if isinstance(phi, SeparableIntegrand) and phi.dimension == 1:
        return phi.components[0]
    return None


@dataclass
class BruteForceResult:
    value: float
    x: SimpleFunction
    kkt_residual: float
    feasibility_residual: float
    iterations: int


def brute_force_primal(problem: MomentProblem, grid: Optional[MeasureSpace] = None,
                       *, tol: float = 1e-12, max_iter: int = 500) -> BruteForceResult:
    """Minimise sum_c mu_c phi(x_c) subject to the constraints, on the primal side.

    Newton descent restricted to the affine feasible set, from a strictly
    feasible start found by linear programming.  Needs a 1-D separable
    integrand and at most 256 cells.
    """
    if grid is not None and not grid.same_partition(problem.space):
        problem = problem.on_grid(grid)
    comp = _scalar_component(problem.integrand)
    if comp is None:
        raise DimensionError("the primal oracle handles one-dimensional separable integrands only")
    n = problem.space.n_cells
    if n > 256:
        raise ValueError("the primal oracle is limited to 256 cells")
    w = problem.space.weights
    lo, hi = comp.domain.lo[0], comp.domain.hi[0]
    M = problem.moment_tensor()[:, :, 0] * w[None, :]  # (m, n) moment matrix
    b = problem.targets
    if problem.m:
        _check_rank(problem)

    x = _strict_start(M, b, lo, hi, n)
    Z = linalg.null_space(M) if problem.m else np.eye(n)

    def f(v):
        return fsum(w * comp.value(v))

    fx = f(x)
    it = 0
    kkt = math.inf
    for it in range(1, max_iter + 1):
        g = Z.T @ (w * comp.grad(x))
        kkt = float(np.max(np.abs(g))) if g.size else 0.0
        if kkt <= tol:
            break
        H = Z.T @ ((w * comp.second_derivative(x))[:, None] * Z)
        dz = -linalg.solve(H, g, assume_a="pos")
        dx = Z @ dz
        # stay strictly inside the domain
        t = 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            if math.isfinite(lo):
                neg = dx < 0
                if neg.any():
                    t = min(t, 0.99 * float(np.min((lo - x[neg]) / dx[neg])))
            if math.isfinite(hi):
                pos = dx > 0
                if pos.any():
                    t = min(t, 0.99 * float(np.min((hi - x[pos]) / dx[pos])))
        slope = float(g @ dz)
        accepted = False
        while t > 1e-16:
            xn = x + t * dx
            fn = f(xn)
            if fn <= fx + 1e-4 * t * slope + 1e-15 * (1.0 + abs(fx)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        if fn >= fx and t < 1.0:
            x, fx = xn, fn
            break
        x, fx = xn, fn
    feas = float(np.max(np.abs(M @ x - b))) if problem.m else 0.0
    return BruteForceResult(fx, SimpleFunction(problem.space, x), kkt, feas, it)


def _strict_start(M, b, lo, hi, n) -> np.ndarray:
    """Point with M x = b and every x_c strictly inside (lo, hi)."""
    m = M.shape[0]
    c = np.zeros(n + 1)
    c[-1] = -1.0
    rows, rhs = [], []
    for k in range(n):
        e = np.zeros(n + 1)
        if math.isfinite(hi):
            e[k], e[-1] = 1.0, 1.0
            rows.append(e.copy())
            rhs.append(hi)
        if math.isfinite(lo):
            e[:] = 0.0
            e[k], e[-1] = -1.0, 1.0
            rows.append(e.copy())
            rhs.append(-lo)
    A_eq = np.hstack([M, np.zeros((m, 1))]) if m else None
    res = optimize.linprog(c, A_ub=np.array(rows) if rows else None, b_ub=np.array(rhs) if rows else None,
                           A_eq=A_eq, b_eq=b if m else None,
                           bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0 or res.x[-1] <= 1e-12:
        raise InfeasibleError("no strictly feasible primal point: constraints are inconsistent with the domain")
    x = res.x[:n]
    # polish the equality constraints after the LP
    if m:
        x = x - np.linalg.lstsq(M, M @ x - b, rcond=None)[0]
    return x


# ---------------------------------------------------------------------------
# stability experiment


@dataclass
class StabilityRow:
    n: int
    value: float
    l1_to_limit: float
    iterations: int
    converged: bool


@dataclass
class StabilityReport:
    rows: list
    limit: PrimalDualSolution
    label: str
    violations: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "limit_value": self.limit.primal_value,
            "rows": [r.__dict__.copy() for r in self.rows],
            "monotone": self.monotone,
            "violations": self.violations,
        }


def stability_run(base: MomentProblem, schedule: Sequence[int], *, tol: float = 1e-9,
                  strict: bool = True) -> StabilityReport:
    """Solve P_n for each ``n`` in ``schedule`` and compare with P_inf (all constraints).

    Values must be nondecreasing in ``n``; violations beyond ``tol`` raise
    :class:`ConvergenceError` when ``strict`` (else they are recorded).
    """
    schedule = sorted(set(int(n) for n in schedule))
    if schedule and (schedule[0] < 0 or schedule[-1] > base.m):
        raise ValueError(f"schedule entries must lie in [0, {base.m}]")
    limit = solve(base, strict=True)
    rows, violations = [], []
    for n in schedule:
        sol = limit if n == base.m else solve(base.truncated(n), strict=True)
        dist = l1_distance(sol.primal, limit.primal)
        if rows and sol.primal_value < rows[-1].value - tol:
            violations.append({"n": n, "value": sol.primal_value, "previous": rows[-1].value})
        rows.append(StabilityRow(n, sol.primal_value, dist, sol.iterations, sol.converged))
    report = StabilityReport(rows, limit, base.label, violations)
    if strict and violations:
        raise ConvergenceError(f"V(P_n) decreased along the schedule: {violations}")
    return report
