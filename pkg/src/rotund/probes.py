"""Executable checks of strong-rotundity properties on finite data.

Each probe returns a :class:`ProbeResult`.  Failures always carry a
witness from which they can be reproduced.  Some properties (weak
compactness of level sets, the Kadec property) cannot be decided from
finitely many simple functions; the corresponding probes are one-sided.
``level_set_compactness_probe`` can exhibit non-compactness but never
certify compactness, and ``kadec_probe`` only judges families on which its
premise is observed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .domains import DomainSpec, smat
from .exceptions import HypothesisViolation, LevelSetExitError, SamplingError
from .integrands import Integrand, classify, numeric_conjugate
from .lab import SequenceFamily, _check_schedule, default_dictionary, family, judge
from .measure import (MeasureSpace, SimpleFunction, fsum, integral_functional, l1_distance,
                      uniform_integrability_profile, weak_gap)

FY_TOL = 1e-10
GRAD_TOL = 1e-6
NUMERIC_CONJ_TOL = 1e-3
IDENTITY_TOL = 1e-9

STATUSES = ("passed", "failed", "premise not met", "witnessed", "no witness", "not applicable")


@dataclass
class ProbeResult:
    name: str
    passed: bool
    status: str
    witness: dict = field(default_factory=dict)
    notes: str = ""
    applicable: bool = True

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "status": self.status, "applicable": self.applicable,
                "witness": _jsonable(self.witness), "notes": self.notes}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _default_space() -> MeasureSpace:
    return MeasureSpace.uniform((0.0, 1.0), 16)


def _as_function(space: MeasureSpace, values: np.ndarray) -> SimpleFunction:
    return SimpleFunction(space, np.asarray(values, float).reshape(space.n_cells, -1))


# ---------------------------------------------------------------------------
# strict convexity


def _pair_points(phi: Integrand, rng: np.random.Generator, face: bool) -> tuple:
    """Two distinct domain points; with ``face`` both lie on a common face."""
    dom = phi.domain
    for _ in range(100):
        if face:
            faces = dom.sample_faces(rng, 1)
            if faces.shape[0] == 0:
                face = False
                continue
            a = faces[0]
            b = dom.sample_faces(rng, 1)[0]
            # share every pinned coordinate of a
            lo, hi = dom.sampling_box()
            pinned = np.isin(a, np.concatenate([np.array(dom.lo), np.array(dom.hi)]))
            if pinned.all():
                b = dom.sample(rng, 1)[0]
            else:
                b = np.where(pinned, a, rng.uniform(lo, hi))
        else:
            a, b = dom.sample(rng, 2)
        width = np.max(dom.sampling_box()[1] - dom.sampling_box()[0])
        if np.linalg.norm(a - b) > 1e-3 * width:
            return a, b
    raise SamplingError(f"could not draw distinct domain points for {phi.name}")


def strict_convexity_transfer(phi: Integrand, space: Optional[MeasureSpace] = None, trials: int = 100,
                              seed: int = 0) -> ProbeResult:
    """Look for x != y in dom I_phi with I_phi((x+y)/2) = (I_phi(x) + I_phi(y))/2.

    Half the trials change a single cell of x (so the gap is that cell's
    weight times the pointwise midpoint gap of phi), the rest change every
    cell.  On closed domains some cell pairs are drawn from a common face.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    space = space or _default_space()
    rng = np.random.default_rng(seed)
    d = phi.dimension
    n = space.n_cells
    min_gap, min_rel, witness = math.inf, math.inf, {}
    for t in range(trials):
        base = phi.domain.sample(rng, n)
        xv, yv = base.copy(), base.copy()
        cells = [int(rng.integers(n))] if t % 2 == 0 else range(n)
        face = bool(rng.integers(2))
        for c in cells:
            a, b = _pair_points(phi, rng, face)
            xv[c], yv[c] = a, b
        x, y = _as_function(space, xv), _as_function(space, yv)
        ix, iy = integral_functional(phi, x), integral_functional(phi, y)
        im = integral_functional(phi, _as_function(space, 0.5 * (xv + yv)))
        if not (math.isfinite(ix) and math.isfinite(iy)):
            raise SamplingError(f"sampled points fall outside dom {phi.name}")
        gap = 0.5 * (ix + iy) - im
        scale = 1.0 + abs(ix) + abs(iy)
        rel = gap / scale
        if rel < min_rel:
            min_gap, min_rel = gap, rel
            witness = {"trial": t, "x": xv.tolist(), "y": yv.tolist(), "cells": list(cells), "gap": gap,
                       "I_x": ix, "I_y": iy, "I_mid": im}
        if rel <= 1e-12:
            return ProbeResult("strict_convexity_transfer", False, "failed", witness,
                               f"midpoint equality within rounding at trial {t}",
                               applicable=phi.flags.strictly_convex_on_domain)
    return ProbeResult("strict_convexity_transfer", True, "passed", {"min_gap": min_gap, "closest": witness},
                       f"{trials} trials, strict midpoint gap on all",
                       applicable=phi.flags.strictly_convex_on_domain)


# ---------------------------------------------------------------------------
# Kadec and level sets


def kadec_probe(phi: Integrand, fam: SequenceFamily, dictionary=None, n_schedule=None) -> ProbeResult:
    """Weak-surrogate and value convergence observed => L1 convergence?"""
    if not (phi.flags.strictly_convex_on_domain or classify(phi).strongly_rotund):
        raise HypothesisViolation(f"{phi.name} is neither strictly convex nor classified strongly rotund")
    from .lab import run
    rep = run(fam, phi, n_schedule, dictionary)
    weak = rep.verdicts["weakly_convergent_surrogate"]
    value = rep.verdicts[f"value_convergent:{phi.name}"]
    strong = rep.verdicts["l1_convergent"]
    witness = {"n": [r.n for r in rep.rows], "weak_gap": rep.column("weak_gap"),
               "value_gap": rep.column("value_gap"), "l1": rep.column("l1"),
               "verdicts": {"weak": weak["verdict"], "value": value["verdict"], "l1": strong["verdict"]}}
    if weak["verdict"] != "holds" or value["verdict"] != "holds":
        return ProbeResult("kadec_probe", False, "premise not met", witness,
                           "weak-surrogate or value convergence not observed; nothing to test")
    if strong["verdict"] == "holds":
        return ProbeResult("kadec_probe", True, "passed", witness, "premise and L1 convergence both observed")
    return ProbeResult("kadec_probe", False, "failed", witness, "premise observed but L1 distance does not vanish")


def level_set_compactness_probe(phi: Integrand, level: float, fam: SequenceFamily, n_schedule=None,
                                candidates: Optional[Sequence[SimpleFunction]] = None,
                                dictionary=None) -> ProbeResult:
    """Search for a sequence in {I_phi <= level}, bounded in L1, that stays
    weakly away from every candidate limit.  Finding one witnesses that
    the level set is not weakly compact; not finding one proves nothing.
    """
    schedule = _check_schedule(n_schedule if n_schedule is not None else fam.default_schedule)
    dictionary = list(dictionary) if dictionary is not None else default_dictionary()
    members = [fam(n) for n in schedule]
    values = [integral_functional(phi, x) for x in members]
    for n, v in zip(schedule, values):
        if not v <= level + 1e-12 * max(1.0, abs(level)):
            raise LevelSetExitError(f"member n={n} has I = {v} > level {level}")
    norms = [x.l1_norm() for x in members]
    growth = _growth(schedule, norms)
    bounded = growth <= 0.01
    if candidates is None:
        last = members[-1]
        mass = fsum(last.space.weights[:, None] * last.values, ) / last.space.total_measure
        mean = SimpleFunction.constant(MeasureSpace.uniform(last.space.box[0], 1), [mass])
        candidates = [fam.limit, mean]
    gaps = [[weak_gap(x, c, dictionary) for x in members] for c in candidates]
    tail_min = [min(g[-3:]) for g in gaps]
    away = all(m >= 0.1 for m in tail_min)
    witness = {"n": schedule, "I": values, "l1_norm": norms, "l1_growth_slope": growth,
               "weak_gap_per_candidate": gaps, "tail_min_gap": tail_min,
               "ui_profile": uniform_integrability_profile(members, [1.0, 10.0, 100.0])}
    if bounded and away:
        return ProbeResult("level_set_compactness_probe", True, "witnessed", witness,
                           "bounded sequence in the level set with no weak cluster among the candidates")
    return ProbeResult("level_set_compactness_probe", False, "no witness", witness,
                       "no non-compactness witness found (this does not certify compactness)")


def _growth(ns, vals) -> float:
    pts = [(math.log(n), math.log(v)) for n, v in zip(ns, vals) if v > 0]
    if len(pts) < 2:
        return 0.0
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0]) if np.ptp(x) > 0 else 0.0


# ---------------------------------------------------------------------------
# conjugate checks


def conjugate_identity_check(phi: Integrand, space: Optional[MeasureSpace] = None, samples: int = 20,
                             seed: int = 0) -> ProbeResult:
    """I_phi(x) + I_phi*(g) >= <x, g> on random pairs; equality when g = grad phi(x) cellwise."""
    if not phi.has_conjugate:
        return ProbeResult("conjugate_identity_check", True, "not applicable", {},
                           f"{phi.name} has no closed-form conjugate", applicable=False)
    space = space or _default_space()
    rng = np.random.default_rng(seed)
    conj = phi.conjugate()
    n = space.n_cells
    worst_ineq, worst_eq = math.inf, 0.0
    for k in range(samples):
        xv = phi.domain.sample(rng, n)
        gv = phi.conj_domain.sample(rng, n, span=3.0)
        x, g = _as_function(space, xv), _as_function(space, gv)
        lhs = integral_functional(phi, x) + integral_functional(conj, g)
        inner = fsum(space.weights * np.sum(x.values * g.values, axis=1))
        slack = lhs - inner
        scale = 1.0 + abs(lhs) + abs(inner)
        if slack < -1e-12 * scale:
            return ProbeResult("conjugate_identity_check", False, "failed",
                               {"sample": k, "x": xv.tolist(), "g": gv.tolist(), "slack": slack},
                               "Fenchel-Young inequality violated")
        worst_ineq = min(worst_ineq, slack)
        gp = np.asarray(phi.grad(xv)).reshape(n, -1)
        gfun = _as_function(space, gp)
        ix, ig = integral_functional(phi, x), integral_functional(conj, gfun)
        inner = fsum(space.weights * np.sum(x.values * gfun.values, axis=1))
        resid = abs(ix + ig - inner) / (1.0 + abs(ix) + abs(ig) + abs(inner))
        worst_eq = max(worst_eq, resid)
        if resid > IDENTITY_TOL:
            return ProbeResult("conjugate_identity_check", False, "failed",
                               {"sample": k, "x": xv.tolist(), "residual": resid},
                               "equality fails at gradient-paired functions")
    return ProbeResult("conjugate_identity_check", True, "passed",
                       {"min_slack": worst_ineq, "max_equality_residual": worst_eq}, f"{samples} samples")


def _boundary_distance(dom: DomainSpec, z: np.ndarray) -> np.ndarray:
    if dom.kind == "all_space":
        return np.full(z.shape[0], np.inf)
    if dom.kind in ("open_box", "closed_box"):
        lo, hi = np.array(dom.lo), np.array(dom.hi)
        return np.min(np.minimum(z - lo, hi - z), axis=1)
    if dom.kind == "open_unit_ball":
        return 1.0 - np.linalg.norm(z, axis=1)
    eig = np.linalg.eigvalsh(smat(z))
    sign = 1.0 if dom.kind == "positive_definite_cone" else -1.0
    return np.min(sign * eig, axis=1)


def _fd_gradient(f, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Five-point central differences, step h per point."""
    n, d = z.shape
    out = np.empty((n, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        step = h[:, None] * e
        f1, f_1 = f(z + step), f(z - step)
        f2, f_2 = f(z + 2 * step), f(z - 2 * step)
        out[:, j] = (8 * (f1 - f_1) - (f2 - f_2)) / (12 * h)
    return out


def _values(phi_fn, d):
    def f(z):
        return np.asarray(phi_fn(z if d > 1 else z[:, 0]), float).reshape(-1)
    return f


def gradient_check(phi: Integrand, n: int = 50, seed: int = 0, tol: float = GRAD_TOL) -> ProbeResult:
    """Closed-form gradients (of phi and phi*) against finite differences."""
    rng = np.random.default_rng(seed)
    d = phi.dimension
    z = _smooth_points(phi, rng, n)
    worst = {"rel_error": 0.0}
    checks = [("grad", z, phi.domain, phi.value, phi.grad)]
    if phi.has_conjugate:
        y = phi.conj_domain.sample(rng, n, span=3.0)
        checks.append(("conj_grad", y, phi.conj_domain, phi.conj_value, phi.conj_grad))
    for label, pts, dom, fn, gfn in checks:
        h = 1e-3 * np.minimum(1.0, _boundary_distance(dom, pts))
        fd = _fd_gradient(_values(fn, d), pts, h)
        exact = np.asarray(gfn(pts if d > 1 else pts[:, 0]), float).reshape(n, d)
        err = np.linalg.norm(fd - exact, axis=1) / np.maximum(1.0, np.linalg.norm(exact, axis=1))
        i = int(np.argmax(err))
        if err[i] > worst["rel_error"]:
            worst = {"rel_error": float(err[i]), "which": label, "point": pts[i].tolist(),
                     "exact": exact[i].tolist(), "finite_difference": fd[i].tolist()}
    ok = worst["rel_error"] <= tol
    return ProbeResult("gradient_check", ok, "passed" if ok else "failed", worst,
                       f"five-point differences, tolerance {tol:g} relative")


def _smooth_points(phi: Integrand, rng, n: int) -> np.ndarray:
    """Interior points where phi is differentiable."""
    pts = phi.domain.sample(rng, 4 * n)
    keep = []
    for p in pts:
        try:
            phi.grad(p if phi.dimension > 1 else p[0])
        except Exception:
            continue
        keep.append(p)
        if len(keep) == n:
            break
    if len(keep) < n:
        raise SamplingError(f"not enough differentiable points for {phi.name}")
    return np.array(keep)


def fenchel_young_check(phi: Integrand, n: int = 50, seed: int = 0, tol: float = FY_TOL) -> ProbeResult:
    """phi(z) + phi*(grad phi(z)) = <z, grad phi(z)>, and >= for random pairs.

    The equality residual is measured relative to max(1, |phi| + |phi*| + |<z,y>|).
    """
    if not phi.has_conjugate:
        return ProbeResult("fenchel_young_check", True, "not applicable", {}, "no closed-form conjugate",
                           applicable=False)
    rng = np.random.default_rng(seed)
    d = phi.dimension
    z = _smooth_points(phi, rng, n)
    y = np.asarray(phi.grad(z if d > 1 else z[:, 0]), float).reshape(n, d)
    fz = np.asarray(phi.value(z if d > 1 else z[:, 0]), float).reshape(-1)
    fy = np.asarray(phi.conj_value(y if d > 1 else y[:, 0]), float).reshape(-1)
    inner = np.sum(z * y, axis=1)
    scale = np.maximum(1.0, np.abs(fz) + np.abs(fy) + np.abs(inner))
    resid = np.abs(fz + fy - inner) / scale
    yr = phi.conj_domain.sample(rng, n, span=3.0)
    fr = np.asarray(phi.conj_value(yr if d > 1 else yr[:, 0]), float).reshape(-1)
    slack = (fz + fr - np.sum(z * yr, axis=1)) / np.maximum(1.0, np.abs(fz) + np.abs(fr))
    i = int(np.argmax(resid))
    witness = {"max_equality_residual": float(resid[i]), "point": z[i].tolist(), "dual_point": y[i].tolist(),
               "min_inequality_slack": float(slack.min())}
    ok = resid[i] <= tol and slack.min() >= -1e-12
    return ProbeResult("fenchel_young_check", bool(ok), "passed" if ok else "failed", witness,
                       f"equality tolerance {tol:g} relative")


def numeric_conjugate_check(phi: Integrand, n: int = 6, seed: int = 0, tol: float = NUMERIC_CONJ_TOL) -> ProbeResult:
    """Closed-form phi* against a grid maximisation of <z, y> - phi(z).

    Dual points are gradients of sampled interior points; the search box is
    centred at that point with half-width tied to the distance from the
    boundary.  For one-dimensional entries extra random dual points are
    checked with the expanding search box.  Above three dimensions the grid
    is replaced by Nelder-Mead started from the box centre shifted by a
    random offset.
    """
    if not phi.has_conjugate:
        return ProbeResult("numeric_conjugate_check", True, "not applicable", {}, "no closed-form conjugate",
                           applicable=False)
    rng = np.random.default_rng(seed)
    d = phi.dimension
    grid = {1: 4001, 2: 401, 3: 61}.get(d, 21)
    z = _smooth_points(phi, rng, n)
    y = np.asarray(phi.grad(z if d > 1 else z[:, 0]), float).reshape(n, d)
    dist = np.minimum(1.0, 0.5 * _boundary_distance(phi.domain, z))
    worst = {"rel_error": 0.0}
    cases = [(y[i], DomainSpec.closed_box(z[i] - dist[i], z[i] + dist[i])) for i in range(n)]
    if d == 1:
        lo, hi = phi.domain.sampling_box()
        for yr in phi.conj_domain.sample(rng, n, span=3.0):
            cases.append((yr, DomainSpec.closed_box(lo, hi)))
    for yi, box in cases:
        if d > 3:
            approx = _local_conjugate(phi, yi, box)
        else:
            approx = numeric_conjugate(phi, yi, box, grid if d > 1 or box.hi[0] - box.lo[0] <= 2 else 20001)
        exact = float(np.asarray(phi.conj_value(yi if d > 1 else yi[0])))
        err = abs(approx - exact) / max(1.0, abs(exact))
        if err > worst["rel_error"]:
            worst = {"rel_error": err, "y": yi.tolist(), "numeric": approx, "closed_form": exact,
                     "box": [list(box.lo), list(box.hi)]}
    ok = worst["rel_error"] <= tol
    return ProbeResult("numeric_conjugate_check", ok, "passed" if ok else "failed", worst,
                       f"grid oracle, tolerance {tol:g} relative")


def _local_conjugate(phi: Integrand, y: np.ndarray, box: DomainSpec) -> float:
    lo, hi = np.array(box.lo), np.array(box.hi)
    start = 0.5 * (lo + hi) + 0.25 * (hi - lo) * np.random.default_rng(0).uniform(-1, 1, lo.size)

    def neg(z):
        v = float(phi.value(z))
        return -(z @ y - v) if math.isfinite(v) else math.inf

    res = optimize.minimize(neg, start, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000, "maxfev": 40000})
    return -float(res.fun)


# ---------------------------------------------------------------------------
# suite


def _kadec_family(phi: Integrand) -> Optional[SequenceFamily]:
    """Decaying Rademacher perturbation around an interior point of a 1-D domain."""
    if phi.dimension != 1:
        return None
    lo, hi = phi.domain.sampling_box()
    centre = float(0.5 * (lo[0] + hi[0]))
    amp = float(0.25 * (hi[0] - lo[0]))
    return family("rademacher", center=centre, amplitude=amp, decay=True, integrand=phi)


def run_suite(phi: Integrand, seed: int = 0) -> list:
    """Every probe that makes sense for ``phi``.  Results with
    ``applicable`` false are informational and never count as failures."""
    results = [
        fenchel_young_check(phi, seed=seed),
        gradient_check(phi, seed=seed),
        numeric_conjugate_check(phi, seed=seed),
        conjugate_identity_check(phi, seed=seed),
        strict_convexity_transfer(phi, seed=seed),
    ]
    fam = _kadec_family(phi)
    if fam is not None and phi.flags.strictly_convex_on_domain:
        results.append(kadec_probe(phi, fam))
    if phi.dimension == 1:
        # fixed level 0; families leaving that level set are skipped
        for name in ("burg_level_escape", "spike_preservation"):
            fam_ = family(name)
            try:
                r = level_set_compactness_probe(phi, 0.0, fam_)
            except LevelSetExitError as exc:
                r = ProbeResult("level_set_compactness_probe", False, "not applicable", {"family": name},
                                str(exc))
            r.applicable = False
            r.witness["family"] = name
            results.append(r)
    return results


def suite_failed(results: Sequence[ProbeResult]) -> bool:
    return any(r.applicable and r.status == "failed" for r in results)
