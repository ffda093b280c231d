"""Closed convex integrands on R^d with conjugates, and the rotundity classifier.

Every integrand evaluates on batches: ``value`` accepts an array of shape
``(..., d)`` and returns shape ``(...)``.  For ``d == 1`` a bare scalar or
an array without a trailing unit axis is read as a batch of scalar points.
Values outside the domain are ``+inf``; gradients are only defined on the
interior and raise :class:`DomainError` elsewhere.

The catalog (:func:`catalog_get`) holds the standard entropies and
barriers.  :func:`numeric_conjugate` is a grid-maximisation oracle used
to check the closed-form conjugates independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np
from scipy import special

from .domains import DomainSpec, smat, svec, triangular_side
from .exceptions import DimensionError, DomainError, NoConjugateError, UnknownNameError

__all__ = [
    "IntegrandFlags",
    "Integrand",
    "ScalarIntegrand",
    "SeparableIntegrand",
    "RotundityClass",
    "CATALOG_NAMES",
    "catalog_get",
    "classify",
    "numeric_conjugate",
    "affine",
    "quartic_root_product",
]


@dataclass(frozen=True)
class IntegrandFlags:
    strictly_convex_on_domain: bool
    conjugate_everywhere_differentiable: bool
    conjugate_full_domain: bool
    domain_open: bool
    separable: bool


def _points(z, d: int):
    """Return ``(Z, lead_shape, scalar_style)`` with ``Z`` of shape (N, d)."""
    z = np.asarray(z, dtype=float)
    scalar_style = d == 1 and (z.ndim == 0 or z.shape[-1] != 1)
    if scalar_style:
        lead = z.shape
        z = z[..., None]
    else:
        if z.ndim == 0 or z.shape[-1] != d:
            raise DimensionError(f"expected trailing dimension {d}, got shape {z.shape}")
        lead = z.shape[:-1]
    return z.reshape(-1, d), lead, scalar_style


def _scalar_out(arr: np.ndarray, lead: tuple):
    out = arr.reshape(lead)
    return out[()] if out.ndim == 0 else out


class Integrand:
    """Base class: a proper lsc convex integrand with its conjugate.

    Subclasses implement the private ``_value``/``_grad``/``_conj_*``
    hooks, which only ever see points inside the relevant domain.
    """

    def __init__(self, name: str, dimension: int, domain: DomainSpec, flags: IntegrandFlags,
                 conj_domain: Optional[DomainSpec] = None, *, value_bound: Optional[float] = None,
                 bound_scope: Optional[str] = None, clarke_bound: Optional[float] = None,
                 params: Optional[dict] = None):
        if domain.dimension != dimension:
            raise DimensionError("domain dimension mismatch")
        self.name = name
        self.dimension = dimension
        self.domain = domain
        self.flags = flags
        self.conj_domain = conj_domain
        # |phi| <= value_bound on all of R^d ("space") or on dom phi ("domain")
        self.value_bound = value_bound
        self.bound_scope = bound_scope
        self.clarke_bound = clarke_bound
        self.params = dict(params or {})
        self._frozen = True

    def __setattr__(self, key, value):
        if getattr(self, "_frozen", False):
            raise AttributeError(f"{type(self).__name__} is immutable")
        object.__setattr__(self, key, value)

    def __repr__(self):
        extra = "".join(f", {k}={v}" for k, v in self.params.items())
        return f"{type(self).__name__}({self.name!r}, d={self.dimension}{extra})"

    # -- hooks ----------------------------------------------------------
    def _value(self, z):
        raise NotImplementedError

    def _grad(self, z):
        raise NotImplementedError

    def _conj_value(self, y):
        raise NoConjugateError(f"{self.name} has no closed-form conjugate")

    def _conj_grad(self, y):
        raise NoConjugateError(f"{self.name} has no closed-form conjugate")

    def _conj_hess(self, y):
        raise NotImplementedError(f"{self.name} has no conjugate Hessian")

    # -- public surface ------------------------------------------------
    @property
    def has_conjugate(self) -> bool:
        return self.conj_domain is not None

    @property
    def has_conj_hess(self) -> bool:
        return self.has_conjugate and type(self)._conj_hess is not Integrand._conj_hess

    def value(self, z):
        Z, lead, _ = _points(z, self.dimension)
        out = np.full(Z.shape[0], np.inf)
        mask = self.domain.contains(Z)
        if mask.any():
            out[mask] = self._value(Z[mask])
        return _scalar_out(out, lead)

    def grad(self, z):
        Z, lead, scalar_style = _points(z, self.dimension)
        mask = self.domain.interior_contains(Z)
        if not mask.all():
            bad = Z[~mask][0]
            raise DomainError(f"{self.name}: gradient undefined at {bad.tolist()} (not interior)")
        g = self._grad(Z)
        return _scalar_out(g[:, 0], lead) if scalar_style else _reshape_vec(g, lead)

    def _require_conjugate(self):
        if self.conj_domain is None:
            raise NoConjugateError(f"{self.name} carries no conjugate")

    def conj_value(self, y):
        self._require_conjugate()
        Y, lead, _ = _points(y, self.dimension)
        out = np.full(Y.shape[0], np.inf)
        mask = self.conj_domain.contains(Y)
        if mask.any():
            out[mask] = self._conj_value(Y[mask])
        return _scalar_out(out, lead)

    def conj_grad(self, y):
        self._require_conjugate()
        Y, lead, scalar_style = _points(y, self.dimension)
        mask = self.conj_domain.interior_contains(Y)
        if not mask.all():
            bad = Y[~mask][0]
            raise DomainError(f"{self.name}: conjugate gradient undefined at {bad.tolist()}")
        g = self._conj_grad(Y)
        return _scalar_out(g[:, 0], lead) if scalar_style else _reshape_vec(g, lead)

    def conj_hess(self, y):
        """Hessian of the conjugate, shape ``(..., d, d)``."""
        self._require_conjugate()
        Y, lead, scalar_style = _points(y, self.dimension)
        mask = self.conj_domain.interior_contains(Y)
        if not mask.all():
            raise DomainError(f"{self.name}: conjugate Hessian undefined at {Y[~mask][0].tolist()}")
        h = self._conj_hess(Y)
        if scalar_style:
            return _scalar_out(h[:, 0, 0], lead)
        return h.reshape(lead + (self.dimension, self.dimension))

    def conjugate(self) -> "Integrand":
        """The conjugate as an integrand in its own right (biconjugate = self)."""
        self._require_conjugate()
        return _ConjugateView(self)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "dimension": self.dimension,
            "domain": self.domain.to_dict(),
            "flags": asdict(self.flags),
        }
        if self.params:
            out["params"] = dict(self.params)
        if self.value_bound is not None:
            out["value_bound"] = {"M": self.value_bound, "scope": self.bound_scope}
        if self.clarke_bound is not None:
            out["clarke_bound"] = self.clarke_bound
        return out


def _reshape_vec(g: np.ndarray, lead: tuple):
    return g.reshape(lead + (g.shape[-1],))


class _ConjugateView(Integrand):
    def __init__(self, base: Integrand):
        f = base.flags
        flags = IntegrandFlags(
            strictly_convex_on_domain=f.conjugate_everywhere_differentiable,
            conjugate_everywhere_differentiable=f.strictly_convex_on_domain and f.domain_open,
            conjugate_full_domain=base.domain.kind == "all_space",
            domain_open=base.conj_domain.is_open,
            separable=f.separable,
        )
        super().__init__(f"{base.name}*", base.dimension, base.conj_domain, flags, base.domain)
        object.__setattr__(self, "base", base)

    def _value(self, z):
        return self.base._conj_value(z)

    def _grad(self, z):
        return self.base._conj_grad(z)

    def _conj_value(self, y):
        return self.base._value(y)

    def _conj_grad(self, y):
        return self.base._grad(y)


# ---------------------------------------------------------------------------
# one-dimensional components


@dataclass(frozen=True)
class _Scalar:
    f: Callable
    df: Callable
    d2f: Callable
    fc: Callable
    dfc: Callable
    d2fc: Callable
    lo: float
    hi: float
    closed: bool
    conj_lo: float = -math.inf
    conj_hi: float = math.inf


class ScalarIntegrand(Integrand):
    """A one-dimensional integrand built from vectorised closed forms."""

    def __init__(self, name: str, spec: _Scalar, strictly_convex: bool = True):
        box = DomainSpec.closed_box if spec.closed else DomainSpec.open_box
        domain = box([spec.lo], [spec.hi])
        if math.isinf(spec.conj_lo) and math.isinf(spec.conj_hi):
            conj_domain = DomainSpec.all_space(1)
        else:
            conj_domain = DomainSpec.open_box([spec.conj_lo], [spec.conj_hi])
        full = conj_domain.kind == "all_space"
        flags = IntegrandFlags(
            strictly_convex_on_domain=strictly_convex,
            conjugate_everywhere_differentiable=full,
            conjugate_full_domain=full,
            domain_open=domain.is_open,
            separable=True,
        )
        super().__init__(name, 1, domain, flags, conj_domain)
        object.__setattr__(self, "spec", spec)

    def _value(self, z):
        # cosh of a huge argument is +inf, which is the right answer
        with np.errstate(over="ignore"):
            return self.spec.f(z[:, 0])

    def _grad(self, z):
        return self.spec.df(z[:, 0])[:, None]

    def _conj_value(self, y):
        return self.spec.fc(y[:, 0])

    def _conj_grad(self, y):
        return self.spec.dfc(y[:, 0])[:, None]

    def _conj_hess(self, y):
        return self.spec.d2fc(y[:, 0])[:, None, None]

    def second_derivative(self, z):
        """phi'' on the interior of the domain (used by the primal oracle)."""
        z = np.asarray(z, dtype=float)
        if not np.all(self.domain.interior_contains(z)):
            raise DomainError(f"{self.name}: second derivative needs interior points")
        return self.spec.d2f(z)


def _xlogx(x):
    return special.xlogy(x, x)


_COMPONENTS = {
    "boltzmann_shannon": _Scalar(
        f=lambda x: _xlogx(x) - x,
        df=np.log,
        d2f=lambda x: 1.0 / x,
        fc=np.exp, dfc=np.exp, d2fc=np.exp,
        lo=0.0, hi=math.inf, closed=True,
    ),
    "fermi_dirac": _Scalar(
        f=lambda x: _xlogx(x) + _xlogx(1.0 - x),
        df=lambda x: np.log(x) - np.log1p(-x),
        d2f=lambda x: 1.0 / (x * (1.0 - x)),
        fc=lambda y: np.logaddexp(0.0, y),
        dfc=special.expit,
        d2fc=lambda y: special.expit(y) * special.expit(-y),
        lo=0.0, hi=1.0, closed=True,
    ),
    "burg": _Scalar(
        f=lambda x: -np.log(x),
        df=lambda x: -1.0 / x,
        d2f=lambda x: 1.0 / x**2,
        fc=lambda y: -1.0 - np.log(-y),
        dfc=lambda y: -1.0 / y,
        d2fc=lambda y: 1.0 / y**2,
        lo=0.0, hi=math.inf, closed=False,
        conj_hi=0.0,
    ),
    "neg_log_cos": _Scalar(
        f=lambda x: -np.log(np.cos(x)),
        df=np.tan,
        d2f=lambda x: 1.0 / np.cos(x) ** 2,
        fc=lambda y: y * np.arctan(y) - 0.5 * np.log1p(y * y),
        dfc=np.arctan,
        d2fc=lambda y: 1.0 / (1.0 + y * y),
        lo=-math.pi / 2, hi=math.pi / 2, closed=False,
    ),
    "cosh_sum": _Scalar(
        f=np.cosh, df=np.sinh, d2f=np.cosh,
        fc=lambda y: y * np.arcsinh(y) - np.hypot(1.0, y),
        dfc=np.arcsinh,
        d2fc=lambda y: 1.0 / np.hypot(1.0, y),
        lo=-math.inf, hi=math.inf, closed=False,
    ),
    # written as (1+x)log(1+x)/2 + (1-x)log(1-x)/2, which equals
    # x atanh x + log(1-x^2)/2 inside and is its lsc closure at +-1
    "atanh_entropy": _Scalar(
        f=lambda x: 0.5 * (_xlogx(1.0 + x) + _xlogx(1.0 - x)),
        df=np.arctanh,
        d2f=lambda x: 1.0 / (1.0 - x * x),
        fc=lambda y: np.logaddexp(y, -y) - math.log(2.0),
        dfc=np.tanh,
        d2fc=lambda y: 1.0 - np.tanh(y) ** 2,
        lo=-1.0, hi=1.0, closed=True,
    ),
    "burg_plus_linear": _Scalar(
        f=lambda x: x - np.log(x),
        df=lambda x: 1.0 - 1.0 / x,
        d2f=lambda x: 1.0 / x**2,
        fc=lambda y: -1.0 - np.log1p(-y),
        dfc=lambda y: 1.0 / (1.0 - y),
        d2fc=lambda y: 1.0 / (1.0 - y) ** 2,
        lo=0.0, hi=math.inf, closed=False,
        conj_hi=1.0,
    ),
}


class SeparableIntegrand(Integrand):
    """z -> sum_i phi_i(z_i) for one-dimensional components phi_i.

    The conjugate is the sum of the component conjugates.
    """

    def __init__(self, components, name: Optional[str] = None):
        components = tuple(components)
        if not components:
            raise DimensionError("need at least one component")
        d = len(components)
        closed = {c.domain.kind == "closed_box" for c in components}
        if len(closed) > 1:
            raise ValueError("components must all have closed or all open domains")
        lo = [c.domain.lo[0] for c in components]
        hi = [c.domain.hi[0] for c in components]
        domain = DomainSpec.closed_box(lo, hi) if closed.pop() else DomainSpec.open_box(lo, hi)
        if all(c.conj_domain.kind == "all_space" for c in components):
            conj_domain = DomainSpec.all_space(d)
        else:
            conj_domain = DomainSpec.open_box(
                [_conj_bounds(c)[0] for c in components], [_conj_bounds(c)[1] for c in components])
        flags = IntegrandFlags(
            strictly_convex_on_domain=all(c.flags.strictly_convex_on_domain for c in components),
            conjugate_everywhere_differentiable=all(
                c.flags.conjugate_everywhere_differentiable for c in components),
            conjugate_full_domain=all(c.flags.conjugate_full_domain for c in components),
            domain_open=all(c.flags.domain_open for c in components),
            separable=True,
        )
        if name is None:
            names = {c.name for c in components}
            name = names.pop() if len(names) == 1 else "+".join(c.name for c in components)
        super().__init__(name, d, domain, flags, conj_domain)
        object.__setattr__(self, "components", components)

    def _sum(self, method: str, z):
        total = 0.0
        for i, c in enumerate(self.components):
            total = total + getattr(c, method)(z[:, i:i + 1])
        return total

    def _stack(self, method: str, z):
        return np.concatenate(
            [getattr(c, method)(z[:, i:i + 1]) for i, c in enumerate(self.components)], axis=1)

    def _value(self, z):
        return self._sum("_value", z)

    def _grad(self, z):
        return self._stack("_grad", z)

    def _conj_value(self, y):
        return self._sum("_conj_value", y)

    def _conj_grad(self, y):
        return self._stack("_conj_grad", y)

    def _conj_hess(self, y):
        diag = np.concatenate(
            [c._conj_hess(y[:, i:i + 1])[:, 0, :] for i, c in enumerate(self.components)], axis=1)
        out = np.zeros(diag.shape + (diag.shape[1],))
        idx = np.arange(diag.shape[1])
        out[:, idx, idx] = diag
        return out

    def second_derivative(self, z):
        """Diagonal of the Hessian, shape ``(..., d)`` (or scalar-style for d=1)."""
        Z, lead, scalar_style = _points(z, self.dimension)
        cols = [c.second_derivative(Z[:, i]) for i, c in enumerate(self.components)]
        out = np.stack(cols, axis=1)
        return _scalar_out(out[:, 0], lead) if scalar_style else _reshape_vec(out, lead)


def _conj_bounds(c: Integrand):
    if c.conj_domain.kind == "all_space":
        return -math.inf, math.inf
    return c.conj_domain.lo[0], c.conj_domain.hi[0]


# ---------------------------------------------------------------------------
# non-separable entries


class NormPower(Integrand):
    """(1/p)|z|^p with conjugate (1/q)|y|^q, 1/p + 1/q = 1."""

    def __init__(self, d: int, p: float):
        if not p > 1:
            raise ValueError(f"norm_power needs p > 1, got {p}")
        flags = IntegrandFlags(True, True, True, True, False)
        super().__init__("norm_power", d, DomainSpec.all_space(d), flags, DomainSpec.all_space(d),
                         params={"p": float(p)})
        object.__setattr__(self, "p", float(p))
        object.__setattr__(self, "q", float(p) / (float(p) - 1.0))

    @staticmethod
    def _power_grad(z, r):
        norm = np.linalg.norm(z, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norm > 0, norm ** (r - 2.0), 0.0)
        return scale * z

    def _value(self, z):
        return np.linalg.norm(z, axis=1) ** self.p / self.p

    def _grad(self, z):
        return self._power_grad(z, self.p)

    def _conj_value(self, y):
        return np.linalg.norm(y, axis=1) ** self.q / self.q

    def _conj_grad(self, y):
        return self._power_grad(y, self.q)

    def _conj_hess(self, y):
        q, d = self.q, self.dimension
        norm = np.linalg.norm(y, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = norm ** (q - 2.0)
            u = np.where(norm[:, None] > 0, y / norm[:, None], 0.0)
        return s[:, None, None] * (np.eye(d) + (q - 2.0) * np.einsum("ni,nj->nij", u, u))


class InverseGap(Integrand):
    """1/(1 - |z|^2) on the open unit ball.

    The conjugate has no convenient closed form; it is evaluated through the
    maximising radius r in [0, 1), the root of 2r = |y|(1 - r^2)^2, found by
    safeguarded Newton iteration.  The maximiser r*y/|y| is the conjugate
    gradient.
    """

    def __init__(self, d: int):
        flags = IntegrandFlags(True, True, True, True, False)
        super().__init__("inverse_gap", d, DomainSpec.open_unit_ball(d), flags,
                         DomainSpec.all_space(d))

    def _value(self, z):
        return 1.0 / (1.0 - np.sum(z * z, axis=1))

    def _grad(self, z):
        gap = 1.0 - np.sum(z * z, axis=1)
        return 2.0 * z / gap[:, None] ** 2

    @staticmethod
    def _radius(s: np.ndarray) -> np.ndarray:
        lo, hi = np.zeros_like(s), np.ones_like(s)
        r = np.minimum(s / 2.0, 0.5)
        for _ in range(200):
            gap = (1.0 - r) * (1.0 + r)
            h = 2.0 * r - s * gap * gap
            dh = 2.0 + 4.0 * s * r * gap
            lo = np.where(h < 0, r, lo)
            hi = np.where(h > 0, r, hi)
            step = r - h / dh
            bad = (step <= lo) | (step >= hi)
            new = np.where(bad, 0.5 * (lo + hi), step)
            if np.all(np.abs(new - r) <= 4 * np.finfo(float).eps * np.maximum(r, 1e-300)):
                r = new
                break
            r = new
        return r

    def _argmax(self, y):
        s = np.linalg.norm(y, axis=1)
        r = self._radius(s)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(s[:, None] > 0, y / s[:, None], 0.0)
        return r, s, r[:, None] * u

    def _conj_value(self, y):
        r, s, _ = self._argmax(y)
        return r * s - 1.0 / ((1.0 - r) * (1.0 + r))

    def _conj_grad(self, y):
        return self._argmax(y)[2]

    def _conj_hess(self, y):
        x = self._argmax(y)[2]
        gap = 1.0 - np.sum(x * x, axis=1)
        g1 = 1.0 / gap**2
        g2 = 2.0 / gap**3
        d = self.dimension
        h = 2.0 * g1[:, None, None] * np.eye(d) + 4.0 * g2[:, None, None] * np.einsum(
            "ni,nj->nij", x, x)
        return np.linalg.inv(h)


class LogDet(Integrand):
    """-log det M on symmetric positive definite k x k matrices (svec coordinates).

    Conjugate: -k - log det(-N) on the negative definite cone.
    """

    def __init__(self, side: int):
        d = side * (side + 1) // 2
        flags = IntegrandFlags(True, False, False, True, False)
        super().__init__("log_det", d, DomainSpec.positive_definite_cone(side), flags,
                         DomainSpec.negative_definite_cone(side), params={"matrix_side": side})
        object.__setattr__(self, "side", side)

    @staticmethod
    def _logdet(mats):
        chol = np.linalg.cholesky(mats)
        return 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)

    def _value(self, z):
        return -self._logdet(smat(z))

    def _grad(self, z):
        return svec(-np.linalg.inv(smat(z)))

    def _conj_value(self, y):
        return -self.side - self._logdet(-smat(y))

    def _conj_grad(self, y):
        return svec(-np.linalg.inv(smat(y)))

    def _conj_hess(self, y):
        inv = np.linalg.inv(smat(y))
        basis = smat(np.eye(self.dimension))  # (d, k, k)
        # H[a, b] = tr(E_a N^-1 E_b N^-1)
        left = np.einsum("nij,bjk,nkl->nbil", inv, basis, inv)
        return np.einsum("aji,nbij->nab", basis, left)


class ClippedNorm(Integrand):
    """min(|z|, 1): bounded, Lipschitz, not convex.

    Carries the value bound M = 1 and Clarke-subgradient bound 1 instead of a
    conjugate.
    """

    def __init__(self, d: int):
        flags = IntegrandFlags(False, False, False, True, False)
        super().__init__("clipped_norm", d, DomainSpec.all_space(d), flags, None,
                         value_bound=1.0, bound_scope="space", clarke_bound=1.0)

    def _value(self, z):
        return np.minimum(np.linalg.norm(z, axis=1), 1.0)

    def _grad(self, z):
        norm = np.linalg.norm(z, axis=1)
        kink = (norm == 0.0) | (norm == 1.0)
        if kink.any():
            raise DomainError(f"clipped_norm is not differentiable at {z[kink][0].tolist()}")
        return np.where((norm < 1.0)[:, None], z / norm[:, None], 0.0)


class _QuarticRootProduct(Integrand):
    def __init__(self):
        flags = IntegrandFlags(False, True, True, False, False)
        super().__init__("quartic_root_product", 2, DomainSpec.closed_box([0, 0], [1, 1]), flags)

    def _value(self, z):
        return -(z[:, 0] * z[:, 1]) ** 0.25

    def _grad(self, z):
        x, y = z[:, 0], z[:, 1]
        c = -0.25 * (x * y) ** -0.75
        return np.stack([c * y, c * x], axis=1)


class _Affine(Integrand):
    def __init__(self, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        flags = IntegrandFlags(False, False, False, True, False)
        super().__init__("affine", c.size, DomainSpec.all_space(c.size), flags,
                         params={"c": c.tolist()})
        object.__setattr__(self, "c", c)

    def _value(self, z):
        return z @ self.c

    def _grad(self, z):
        return np.broadcast_to(self.c, z.shape).copy()


def quartic_root_product() -> Integrand:
    """-(xy)^(1/4) on [0,1]^2: convex with differentiable conjugate, but
    affine (identically zero) along the edges x = 0 and y = 0."""
    return _QuarticRootProduct()


def affine(c) -> Integrand:
    """z -> <c, z>, convex but nowhere strictly convex."""
    return _Affine(c)


# ---------------------------------------------------------------------------
# catalog

CATALOG_NAMES = (
    "boltzmann_shannon",
    "fermi_dirac",
    "burg",
    "norm_power",
    "neg_log_cos",
    "cosh_sum",
    "atanh_entropy",
    "inverse_gap",
    "burg_plus_linear",
    "clipped_norm",
    "log_det",
)


def catalog_get(name: str, d: int = 1, *, p: Optional[float] = None) -> Integrand:
    """Build a catalog integrand of dimension ``d``.

    ``norm_power`` takes the exponent ``p > 1`` (default 2).  ``log_det``
    works on symmetric matrices in svec coordinates, so ``d`` must be a
    triangular number k(k+1)/2.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise DimensionError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    if name in _COMPONENTS:
        spec = _COMPONENTS[name]
        return SeparableIntegrand([ScalarIntegrand(name, spec) for _ in range(d)], name=name)
    if name == "norm_power":
        return NormPower(d, 2.0 if p is None else p)
    if name == "inverse_gap":
        return InverseGap(d)
    if name == "clipped_norm":
        return ClippedNorm(d)
    if name == "log_det":
        side = triangular_side(d)
        if side is None:
            raise DimensionError(
                f"log_det needs d = k(k+1)/2 for a matrix side k; {d} is not of that form")
        return LogDet(side)
    raise UnknownNameError(f"unknown integrand {name!r}; choose from {', '.join(CATALOG_NAMES)}")


# ---------------------------------------------------------------------------
# classification

RULE_OPEN_DOMAIN = "open domain with everywhere-differentiable conjugate"
RULE_SEPARABLE = "separable with everywhere-differentiable component conjugates"
RULE_STRICT_FULL = "strictly convex with everywhere-differentiable conjugate"
LEVEL_SET_WARNING = "weakly compact lower level sets may fail (conjugate not finite everywhere)"


@dataclass(frozen=True)
class RotundityClass:
    strongly_rotund: bool
    reasons: tuple = field(default=())
    warnings: tuple = field(default=())

    def to_dict(self) -> dict:
        return {"strongly_rotund": self.strongly_rotund, "reasons": list(self.reasons),
                "warnings": list(self.warnings)}


def classify(phi: Integrand) -> RotundityClass:
    """Sufficient conditions for I_phi to be strongly rotund on L^1.

    Three rules, any of which suffices:

    * dom phi open and phi* differentiable on all of R^d;
    * phi separable with every component conjugate differentiable on R;
    * phi strictly convex on its domain and phi* differentiable on R^d.

    A negative answer means no rule fired, not that rotundity fails.
    """
    f = phi.flags
    reasons = []
    if f.conjugate_everywhere_differentiable and f.domain_open:
        reasons.append(RULE_OPEN_DOMAIN)
    components = getattr(phi, "components", None)
    if f.separable and components is not None and all(
            c.flags.conjugate_everywhere_differentiable for c in components):
        reasons.append(RULE_SEPARABLE)
    if (f.strictly_convex_on_domain and f.conjugate_everywhere_differentiable
            and f.conjugate_full_domain):
        reasons.append(RULE_STRICT_FULL)
    warnings = () if f.conjugate_full_domain else (LEVEL_SET_WARNING,)
    return RotundityClass(bool(reasons), tuple(reasons), warnings)


# ---------------------------------------------------------------------------
# grid oracle for conjugates


def _grid_max(phi: Integrand, y: np.ndarray, lo: np.ndarray, hi: np.ndarray, grid: int,
              chunk: int = 1 << 20):
    d = phi.dimension
    axes = [np.linspace(a, b, grid) for a, b in zip(lo, hi)]
    total = grid**d
    best, best_idx = -math.inf, None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        coords = np.unravel_index(idx, (grid,) * d)
        z = np.stack([axes[k][coords[k]] for k in range(d)], axis=1)
        with np.errstate(over="ignore"):
            vals = phi.value(z if d > 1 else z[:, 0])
        finite = np.isfinite(vals)
        if not finite.any():
            continue
        obj = np.where(finite, z @ y - np.where(finite, vals, 0.0), -np.inf)
        j = int(np.argmax(obj))
        if obj[j] > best:
            best, best_idx = float(obj[j]), tuple(int(c[j]) for c in coords)
    return best, best_idx


def numeric_conjugate(phi: Integrand, y, search_box: DomainSpec, grid: int, *,
                      divergence_threshold: float = 1e6, max_expansions: int = 8) -> float:
    """Lower bound on phi*(y) by maximising <z, y> - phi(z) over a grid.

    ``grid`` points per axis are laid over ``search_box``.  When the best
    point sits on the outer face of the box the box is enlarged tenfold
    about its centre; if the objective then exceeds
    ``divergence_threshold`` the supremum is reported as ``+inf``.
    Returns ``-inf`` if no grid point lies in dom phi.
    """
    if search_box.kind not in ("open_box", "closed_box"):
        raise ValueError("search_box must be a box")
    lo, hi = np.array(search_box.lo, float), np.array(search_box.hi, float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("search_box must be bounded")
    if grid < 2:
        raise ValueError("grid needs at least two points per axis")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != phi.dimension:
        raise DimensionError("y has the wrong dimension")

    best, idx = _grid_max(phi, y, lo, hi, grid)
    overall = best
    for _ in range(max_expansions):
        if idx is None or not any(i in (0, grid - 1) for i in idx):
            break
        centre, half = (lo + hi) / 2, (hi - lo) / 2
        lo, hi = centre - 10 * half, centre + 10 * half
        best, idx = _grid_max(phi, y, lo, hi, grid)
        overall = max(overall, best)
        if overall > divergence_threshold:
            return math.inf
    return overall
