"""Watson's triple integral and the Burg cosine-moment threshold.

Convention: W1(w) is the *average* of 1/(3 - w (cos 2 pi x1 + cos 2 pi x2 +
cos 2 pi x3)) over the unit cube.  Integrating 1/D = int_0^inf exp(-t D) dt
term by term gives

    W1(w) = int_0^inf I0(w t)^3 exp(-3 t) dt,

so W1(0) = 1/3.  The reciprocal-cosine density p = (1/W1) / (3 - w sum cos)
has unit mass, and integrating (3 - w sum cos) p = 1/W1 gives its cosine
moment alpha(w) = (1 - 1/(3 W1(w))) / w.  The threshold is alpha(1).

Two independent routes evaluate W1:

(i)  the Bessel form: Gauss-Legendre panels on [0, T] plus the tail
     [T, inf) mapped by t = T / v^2, which turns the t^(-3/2) decay at
     w = 1 into a smooth integrand on (0, 1];
(ii) the cube average itself, by tensor Gauss-Legendre on [0, pi]^3 with
     panels graded geometrically toward the corner where the denominator
     vanishes as w -> 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import optimize

from .exceptions import CrossCheckError, DomainError, QuadratureError

ALPHA_BAR = 0.340537329550999142833

# fixed quadrature constants (reported in metadata)
SERIES_CUTOFF = 30.0
ASYMPTOTIC_TERMS = 20
BESSEL_T = 30.0
BESSEL_NODES = 20
TAIL_PANELS = 8
CUBE_NODES = 12
CUBE_MIN_DEPTH, CUBE_MAX_DEPTH = 6, 22
CROSS_CHECK_TOL = 1e-6
CROSS_CHECK_MAX_W = 0.999


def quadrature_metadata() -> dict:
    return {
        "bessel_series_cutoff": SERIES_CUTOFF,
        "bessel_asymptotic_terms": ASYMPTOTIC_TERMS,
        "route_i": {"split": BESSEL_T, "panel_width": 1.0, "nodes": BESSEL_NODES, "tail_panels": TAIL_PANELS},
        "route_ii": {"nodes_per_panel": CUBE_NODES, "depth_range": [CUBE_MIN_DEPTH, CUBE_MAX_DEPTH]},
        "cross_check_tol": CROSS_CHECK_TOL,
    }


# ---------------------------------------------------------------------------
# modified Bessel function I0


def _i0_minus_one_series(x: np.ndarray) -> np.ndarray:
    """I0(x) - 1 = sum_{k>=1} (x/2)^(2k) / (k!)^2, all terms positive."""
    q = 0.25 * x * x
    term = q.copy()
    total = q.copy()
    k = 1
    while True:
        k += 1
        term = term * q / (k * k)
        total = total + term
        if np.all(term <= 1e-17 * total) or k > 200:
            return total


def _i0e_asymptotic(x: np.ndarray) -> np.ndarray:
    # exp(-x) I0(x) ~ (2 pi x)^(-1/2) sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, ASYMPTOTIC_TERMS):
        term = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        total = total + term
    return total / np.sqrt(2.0 * math.pi * x)


def bessel_i0(t):
    """Modified Bessel function I0 (even; defined for all real t)."""
    x = np.abs(np.asarray(t, dtype=float))
    out = np.empty_like(x)
    small = x <= SERIES_CUTOFF
    out[small] = 1.0 + _i0_minus_one_series(x[small])
    big = ~small
    out[big] = _i0e_asymptotic(x[big]) * np.exp(x[big])
    return out if out.ndim else float(out)


def bessel_i0e(t):
    """exp(-|t|) I0(t), finite for every t."""
    x = np.abs(np.asarray(t, dtype=float))
    out = np.empty_like(x)
    small = x <= SERIES_CUTOFF
    out[small] = (1.0 + _i0_minus_one_series(x[small])) * np.exp(-x[small])
    big = ~small
    out[big] = _i0e_asymptotic(x[big])
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# route (i): Bessel form


@lru_cache(maxsize=None)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panels(edges: np.ndarray, n: int):
    x, wts = _gauss(n)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    return ((a + b) * 0.5 + half * x).ravel(), (half * wts).ravel()


def _excess_integrand(t: np.ndarray, w: float) -> np.ndarray:
    """3 (I0(w t)^3 - 1) exp(-3 t), computed without cancellation."""
    x = w * t
    out = np.empty_like(t)
    small = x <= SERIES_CUTOFF
    d = _i0_minus_one_series(x[small])
    i0 = 1.0 + d
    out[small] = 3.0 * d * (i0 * i0 + i0 + 1.0) * np.exp(-3.0 * t[small])
    big = ~small
    tb = t[big]
    out[big] = 3.0 * (_i0e_asymptotic(x[big]) ** 3 * np.exp(-3.0 * (1.0 - w) * tb) - np.exp(-3.0 * tb))
    return out


def _bessel_excess(w: float) -> float:
    """3 W1(w) - 1 by route (i)."""
    if w == 0.0:
        return 0.0
    t, wt = _panels(np.linspace(0.0, BESSEL_T, int(BESSEL_T) + 1), BESSEL_NODES)
    head = math.fsum((wt * _excess_integrand(t, w)).tolist())
    # tail: t = T / v^2, dt = 2 T / v^3 dv, v in (0, 1]
    v, wv = _panels(np.linspace(0.0, 1.0, TAIL_PANELS + 1), BESSEL_NODES)
    tt = BESSEL_T / (v * v)
    tail = math.fsum((wv * _excess_integrand(tt, w) * 2.0 * BESSEL_T / v ** 3).tolist())
    return head + tail


def _check_w(w: float) -> float:
    w = float(w)
    if not 0.0 <= w <= 1.0:
        raise DomainError(f"w must lie in [0, 1], got {w}")
    return w


# ---------------------------------------------------------------------------
# route (ii): cube quadrature


def _cube_depth(w: float) -> int:
    if w >= 1.0:
        return CUBE_MAX_DEPTH
    depth = math.ceil(math.log2(math.pi / math.sqrt(1.0 - w))) + 4
    return int(min(max(depth, CUBE_MIN_DEPTH), CUBE_MAX_DEPTH))


def _cube_rule(w: float, nodes: int):
    depth = _cube_depth(w)
    edges = np.concatenate([[0.0], math.pi * 2.0 ** -np.arange(depth, -1, -1)])
    return _panels(edges, nodes)


def cube_integrals(w: float, nodes: int = CUBE_NODES) -> tuple:
    """Cube averages of 1/D and cos(theta1)/D with D = 3 - w sum cos(theta_i).

    The average over [0,1]^3 of a function of cos(2 pi x_i) equals the
    average over [0, pi]^3 in theta = 2 pi x by symmetry.
    """
    w = _check_w(w)
    th, wt = _cube_rule(w, nodes)
    c = np.cos(th)
    wt = wt / math.pi
    # 3 - w(c1 + c2 + c3) = (1 - w c1) + (1 - w c2) + (1 - w c3), each >= 0
    # 1 - w cos(theta) without cancellation near theta = 0
    e = (1.0 - w) + 2.0 * w * np.sin(0.5 * th) ** 2
    e23 = e[:, None] + e[None, :]
    w23 = wt[:, None] * wt[None, :]
    mass, moment = [], []
    for i in range(th.size):
        inv = w23 / (e[i] + e23)
        s = float(inv.sum())
        mass.append(wt[i] * s)
        moment.append(wt[i] * c[i] * s)
    return math.fsum(mass), math.fsum(moment)


def watson_cube(w: float, nodes: int = CUBE_NODES) -> float:
    """W1(w) by route (ii)."""
    return cube_integrals(w, nodes)[0]


# ---------------------------------------------------------------------------
# public API


def watson(w: float, cross_check: bool = False) -> float:
    """W1(w), unit-cube-average convention, by the Bessel route.

    With ``cross_check`` (honoured for w <= 0.999) the cube route is also
    evaluated and a :class:`CrossCheckError` is raised if they differ by
    more than 1e-6.
    """
    w = _check_w(w)
    value = (1.0 + _bessel_excess(w)) / 3.0
    if cross_check and w <= CROSS_CHECK_MAX_W:
        other = watson_cube(w)
        if abs(other - value) > CROSS_CHECK_TOL:
            raise CrossCheckError(f"W1({w}): Bessel route {value!r} vs cube route {other!r}")
    return value


def alpha_of_w(w: float) -> float:
    """Cosine moment of the reciprocal-cosine density: (1 - 1/(3 W1)) / w."""
    w = _check_w(w)
    if w == 0.0:
        return 0.0
    excess = _bessel_excess(w)
    return excess / ((1.0 + excess) * w)


@lru_cache(maxsize=1)
def alpha_bar() -> float:
    """The threshold alpha(1), computed."""
    return alpha_of_w(1.0)


def w_of_alpha(alpha: float) -> float:
    """Invert :func:`alpha_of_w` on [0, 1]."""
    alpha = float(alpha)
    top = alpha_bar()
    if alpha < 0.0:
        raise DomainError("alpha must be nonnegative")
    if alpha > max(top, ALPHA_BAR) + 1e-12:
        raise DomainError(f"alpha = {alpha} exceeds the threshold {ALPHA_BAR}: no reciprocal-cosine optimum")
    if alpha == 0.0:
        return 0.0
    if alpha >= top:
        return 1.0
    return optimize.brentq(lambda w: alpha_of_w(w) - alpha, 0.0, 1.0, xtol=1e-16, rtol=1e-15, maxiter=200)


@dataclass(frozen=True)
class BurgDensity:
    """p(x) = (1/W1) / (3 - w sum cos(2 pi x_i)) on the unit cube."""

    w: float
    W1: float

    @classmethod
    def for_w(cls, w: float) -> "BurgDensity":
        return cls(_check_w(w), watson(w))

    @property
    def normalization(self) -> float:
        return 1.0 / self.W1

    def __call__(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[-1] != 3:
            raise DomainError("points must have three coordinates")
        denom = 3.0 - self.w * np.cos(2.0 * math.pi * x).sum(axis=-1)
        with np.errstate(divide="ignore"):
            return self.normalization / denom

    def grid_values(self, n: int = 16) -> tuple:
        """Midpoint grid of n^3 points and the density there."""
        g = (np.arange(n) + 0.5) / n
        pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        return pts, self(pts)

    def to_csv(self, path, n: int = 16) -> None:
        pts, vals = self.grid_values(n)
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["x1", "x2", "x3", "p"])
            for p, v in zip(pts, vals):
                out.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), repr(float(v))])

    def to_dict(self) -> dict:
        return {"w": self.w, "W1": self.W1, "normalization": self.normalization}


@dataclass
class WatsonResult:
    w: Optional[float]
    W1: Optional[float]
    alpha: float
    attained: bool
    density: Optional[BurgDensity] = None
    metadata: dict = field(default_factory=quadrature_metadata)

    def to_dict(self) -> dict:
        return {"w": self.w, "W1": self.W1, "alpha": self.alpha, "attained": self.attained}


def classify_attainment(alpha: float) -> WatsonResult:
    """Is the Burg problem with all three cosine moments equal to alpha attained?"""
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise DomainError("alpha must lie in [0, 1)")
    if alpha > ALPHA_BAR:
        return WatsonResult(None, None, alpha, False)
    w = w_of_alpha(alpha)
    dens = BurgDensity.for_w(w)
    return WatsonResult(w, dens.W1, alpha, True, dens)


@dataclass
class MomentCheck:
    mass: float
    moment: float
    error_estimate: float
    expected_moment: float


def verify_density_moments(p: BurgDensity, tol: Optional[float] = None) -> MomentCheck:
    """Mass and first cosine moment of ``p`` by cube quadrature.

    The error estimate compares two node counts per panel; if it exceeds
    ``tol`` (default 1e-6 for w <= 0.999, else 1e-4) a :class:`QuadratureError`
    carrying the estimate is raised.
    """
    if tol is None:
        tol = 1e-6 if p.w <= CROSS_CHECK_MAX_W else 1e-4
    m1, c1 = cube_integrals(p.w, CUBE_NODES)
    m2, c2 = cube_integrals(p.w, CUBE_NODES + 4)
    scale = p.normalization
    err = scale * max(abs(m1 - m2), abs(c1 - c2))
    if err > tol:
        raise QuadratureError(f"cube quadrature at w={p.w} did not settle (estimate {err:.2e})", error_estimate=err)
    return MomentCheck(scale * m2, scale * c2, err, alpha_of_w(p.w))
