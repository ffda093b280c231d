"""Finite measure spaces, simple functions and exact integrals on them.

A :class:`MeasureSpace` is a tensor-product partition of a box into cells,
each carrying a weight (its measure).  Weights default to Lebesgue volume;
custom weights give a measure with piecewise-constant density.  A
:class:`SimpleFunction` assigns one vector in R^d to each cell, so every
integral below is a finite sum and therefore exact up to rounding.  Sums
use :func:`math.fsum`, which is correctly rounded and independent of
summation order.

Functions on different partitions of the same box are compared on their
common refinement (sorted merge of breakpoints, axis by axis).

Weak convergence cannot be decided from finite data; :func:`weak_gap`
measures the largest normalised pairing against a declared dictionary of
test functionals and is only a surrogate for it.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import DimensionError, IncompatibleSpacesError
from .integrands import Integrand

_REL = 1e-12


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def fsum(a) -> float:
    a = np.asarray(a, dtype=float).ravel()
    if np.isposinf(a).any():
        return math.inf
    return math.fsum(a.tolist())


class MeasureSpace:
    """Tensor-product cell partition of a box with positive cell weights."""

    def __init__(self, edges: Sequence, weights=None):
        if isinstance(edges, np.ndarray) and edges.ndim == 1:
            edges = [edges]
        edges = [np.asarray(e, dtype=float) for e in edges]
        if not edges:
            raise DimensionError("need at least one axis")
        for e in edges:
            if e.ndim != 1 or e.size < 2 or not np.all(np.isfinite(e)):
                raise ValueError("each axis needs at least two finite breakpoints")
            if not np.all(np.diff(e) > 0):
                raise ValueError("breakpoints must be strictly increasing")
        self.edges = tuple(_readonly(e) for e in edges)
        self.shape = tuple(e.size - 1 for e in self.edges)
        lengths = np.meshgrid(*[np.diff(e) for e in self.edges], indexing="ij")
        self.volumes = _readonly(np.prod(np.stack(lengths), axis=0).ravel())
        if weights is None:
            self.weights = self.volumes
            self.lebesgue = True
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.size != self.volumes.size:
                raise DimensionError("one weight per cell required")
            if not (np.all(np.isfinite(w)) and np.all(w > 0)):
                raise ValueError("cell weights must be finite and positive")
            self.weights = _readonly(w)
            self.lebesgue = False
        self.total_measure = fsum(self.weights)

    # -- constructors ---------------------------------------------------
    @classmethod
    def uniform(cls, box=(0.0, 1.0), cells=1) -> "MeasureSpace":
        """Equal cells on ``box``: ``(a, b)`` in 1-D or ``[(a1, b1), ...]``."""
        box = _as_box(box)
        if isinstance(cells, (int, np.integer)):
            cells = [int(cells)] * len(box)
        return cls([np.linspace(a, b, n + 1) for (a, b), n in zip(box, cells)])

    @classmethod
    def from_breakpoints(cls, breaks, box=(0.0, 1.0)) -> "MeasureSpace":
        """1-D partition of ``box`` at the given interior breakpoints."""
        a, b = box
        inner = sorted({float(t) for t in breaks if a < t < b})
        return cls([np.array([a, *inner, b])])

    # -- geometry ---------------------------------------------------------
    @property
    def ndim(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return self.volumes.size

    @property
    def box(self) -> tuple:
        return tuple((float(e[0]), float(e[-1])) for e in self.edges)

    @property
    def density(self) -> np.ndarray:
        return self.weights / self.volumes

    def _corners(self, which: int) -> np.ndarray:
        cols = np.meshgrid(*[e[:-1] if which == 0 else e[1:] for e in self.edges], indexing="ij")
        return np.stack([c.ravel() for c in cols], axis=1)

    @property
    def cell_lo(self) -> np.ndarray:
        return self._corners(0)

    @property
    def cell_hi(self) -> np.ndarray:
        return self._corners(1)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.cell_lo + self.cell_hi)

    def same_partition(self, other: "MeasureSpace") -> bool:
        return self is other or (
            len(self.edges) == len(other.edges)
            and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.edges, other.edges))
            and np.array_equal(self.weights, other.weights))

    def to_dict(self) -> dict:
        out = {"box": [list(b) for b in self.box], "edges": [e.tolist() for e in self.edges]}
        if not self.lebesgue:
            out["weights"] = self.weights.tolist()
        return out

    def __repr__(self):
        return f"MeasureSpace(box={self.box}, cells={self.shape})"


def _as_box(box) -> list:
    box = list(box)
    if len(box) == 2 and all(np.ndim(b) == 0 for b in box):
        return [(float(box[0]), float(box[1]))]
    return [(float(a), float(b)) for a, b in box]


def common_refinement(s: MeasureSpace, t: MeasureSpace):
    """Merge two partitions of the same box.

    Returns ``(space, idx_s, idx_t)`` where ``idx_s[c]`` is the cell of ``s``
    containing refined cell ``c``.  Both measures must agree (same
    piecewise-constant density) on every refined cell.
    """
    if s.same_partition(t):
        idx = np.arange(s.n_cells)
        return s, idx, idx
    if s.ndim != t.ndim:
        raise IncompatibleSpacesError("spaces have different dimension")
    for (a1, b1), (a2, b2) in zip(s.box, t.box):
        scale = max(1.0, abs(a1), abs(b1))
        if abs(a1 - a2) > _REL * scale or abs(b1 - b2) > _REL * scale:
            raise IncompatibleSpacesError(f"boxes differ: {s.box} vs {t.box}")
    merged = [np.union1d(e, f) for e, f in zip(s.edges, t.edges)]
    merged = [_dedupe(m) for m in merged]
    mids = [0.5 * (m[:-1] + m[1:]) for m in merged]

    def index_into(space):
        per_axis = [np.clip(np.searchsorted(e, mid) - 1, 0, e.size - 2) for e, mid in zip(space.edges, mids)]
        grids = np.meshgrid(*per_axis, indexing="ij")
        return np.ravel_multi_index([g.ravel() for g in grids], space.shape)

    idx_s, idx_t = index_into(s), index_into(t)
    refined = MeasureSpace(merged)
    if s.lebesgue and t.lebesgue:
        return refined, idx_s, idx_t
    ds, dt = s.density[idx_s], t.density[idx_t]
    if not np.allclose(ds, dt, rtol=_REL, atol=0.0):
        raise IncompatibleSpacesError("the two spaces carry different measures")
    return MeasureSpace(merged, refined.volumes * ds), idx_s, idx_t


def _dedupe(edges: np.ndarray) -> np.ndarray:
    # breakpoints closer than rounding noise are the same breakpoint
    keep = np.concatenate([[True], np.diff(edges) > _REL * max(1.0, float(np.abs(edges).max()))])
    out = edges[keep]
    out[-1] = edges[-1]
    return out


class SimpleFunction:
    """Piecewise-constant R^d-valued function on a :class:`MeasureSpace`."""

    def __init__(self, space: MeasureSpace, values):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != space.n_cells:
            raise DimensionError(f"need one value per cell ({space.n_cells}), got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("simple function values must be finite")
        self.space = space
        self.values = _readonly(v)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    # -- constructors ---------------------------------------------------
    @classmethod
    def constant(cls, space: MeasureSpace, value) -> "SimpleFunction":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(space, np.tile(v, (space.n_cells, 1)))

    @classmethod
    def step(cls, breaks, values, box=(0.0, 1.0)) -> "SimpleFunction":
        """1-D step function: ``values[i]`` on the i-th piece between breaks."""
        a, b = box
        edges = np.array([a, *breaks, b], dtype=float)
        return cls(MeasureSpace([edges]), np.asarray(values, dtype=float))

    @classmethod
    def from_callable(cls, space: MeasureSpace, fn) -> "SimpleFunction":
        """Sample ``fn`` at cell midpoints."""
        return cls(space, np.asarray(fn(space.midpoints), dtype=float))

    # -- arithmetic -------------------------------------------------------
    def _binary(self, other, op):
        if isinstance(other, SimpleFunction):
            if other.d != self.d:
                raise DimensionError("codomain dimensions differ")
            space, i, j = common_refinement(self.space, other.space)
            return SimpleFunction(space, op(self.values[i], other.values[j]))
        return SimpleFunction(self.space, op(self.values, np.asarray(other, dtype=float)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return SimpleFunction(self.space, np.asarray(other, dtype=float) - self.values)

    def __mul__(self, c):
        return SimpleFunction(self.space, self.values * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return SimpleFunction(self.space, self.values / float(c))

    def __neg__(self):
        return SimpleFunction(self.space, -self.values)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def l1_norm(self) -> float:
        return fsum(self.space.weights * self.norms())

    def refined_to(self, space: MeasureSpace) -> "SimpleFunction":
        """The same function expressed on a finer partition ``space``."""
        ref, i, _ = common_refinement(self.space, space)
        return SimpleFunction(ref, self.values[i])

    def __repr__(self):
        return f"SimpleFunction(cells={self.space.n_cells}, d={self.d})"

    # -- serialisation ----------------------------------------------------
    def to_rows(self) -> list:
        lo, hi = self.space.cell_lo, self.space.cell_hi
        return [[*lo[c], *hi[c], self.space.weights[c], *self.values[c]]
                for c in range(self.space.n_cells)]

    def to_csv(self, fh=None) -> str:
        k, d = self.space.ndim, self.d
        header = ([f"lo_{i + 1}" for i in range(k)] + [f"hi_{i + 1}" for i in range(k)]
                  + ["weight"] + [f"v_{i + 1}" for i in range(d)])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in self.to_rows():
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def to_json(self) -> list:
        lo, hi = self.space.cell_lo, self.space.cell_hi
        return [{"lo": lo[c].tolist(), "hi": hi[c].tolist(), "weight": float(self.space.weights[c]),
                 "value": self.values[c].tolist()} for c in range(self.space.n_cells)]

    @classmethod
    def from_csv(cls, text: str) -> "SimpleFunction":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        k = sum(1 for h in header if h.startswith("lo_"))
        d = sum(1 for h in header if h.startswith("v_"))
        if k == 0 or d == 0 or len(header) != 2 * k + 1 + d:
            raise ValueError("malformed simple-function CSV header")
        data = np.array([[float(x) for x in r] for r in body])
        return _from_cells(data[:, :k], data[:, k:2 * k], data[:, 2 * k], data[:, 2 * k + 1:])

    @classmethod
    def from_json(cls, cells: list) -> "SimpleFunction":
        lo = np.array([c["lo"] for c in cells], dtype=float)
        hi = np.array([c["hi"] for c in cells], dtype=float)
        w = np.array([c["weight"] for c in cells], dtype=float)
        v = np.array([np.atleast_1d(c["value"]) for c in cells], dtype=float)
        return _from_cells(lo, hi, w, v)


def _from_cells(lo, hi, weights, values) -> SimpleFunction:
    lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
    n, k = lo.shape
    if not np.all(hi > lo):
        raise ValueError("every cell needs lo < hi")
    edges = [np.union1d(lo[:, j], hi[:, j]) for j in range(k)]
    shape = tuple(e.size - 1 for e in edges)
    if int(np.prod(shape)) != n:
        raise ValueError("cells do not form a tensor-product partition of a box")
    multi = []
    for j, e in enumerate(edges):
        a = np.searchsorted(e, lo[:, j])
        b = np.searchsorted(e, hi[:, j])
        if not (np.all(e[a] == lo[:, j]) and np.all(b == a + 1)):
            raise ValueError("cells must span consecutive breakpoints")
        multi.append(a)
    flat = np.ravel_multi_index(multi, shape)
    if np.unique(flat).size != n:
        raise ValueError("duplicate cells")
    order = np.argsort(flat)
    space = MeasureSpace(edges)
    w = np.asarray(weights, float)[order]
    if not np.allclose(w, space.volumes, rtol=_REL, atol=0.0):
        space = MeasureSpace(edges, w)
    return SimpleFunction(space, np.asarray(values, float)[order])


# ---------------------------------------------------------------------------
# test functionals (elements of L-infinity)


@dataclass(frozen=True)
class TestFunctional:
    """A bounded function g on the box, paired with x via the integral of <x, g>.

    Scalar kinds (``constant`` with scalar c, ``indicator``, ``trig``) act on
    R^d-valued x through ``direction`` (default: all ones).
    """

    __test__ = False  # not a pytest class

    kind: str
    params: dict = field(default_factory=dict)
    direction: Optional[tuple] = None

    @classmethod
    def constant(cls, c=1.0) -> "TestFunctional":
        return cls("constant", {"c": np.atleast_1d(np.asarray(c, float)).tolist()})

    @classmethod
    def indicator(cls, lo, hi) -> "TestFunctional":
        return cls("indicator", {"lo": list(np.atleast_1d(lo).astype(float)),
                                 "hi": list(np.atleast_1d(hi).astype(float))})

    @classmethod
    def trig(cls, frequency: int, phase: str = "cos", axis: int = 0) -> "TestFunctional":
        if phase not in ("cos", "sin"):
            raise ValueError("phase must be 'cos' or 'sin'")
        return cls("trig", {"k": int(frequency), "phase": phase, "axis": int(axis)})

    @classmethod
    def piecewise(cls, fn: SimpleFunction) -> "TestFunctional":
        return cls("piecewise", {"fn": fn})

    def with_direction(self, direction) -> "TestFunctional":
        return TestFunctional(self.kind, self.params, tuple(float(v) for v in direction))

    def _dir(self, d: int) -> np.ndarray:
        if self.direction is None:
            return np.ones(d)
        if len(self.direction) != d:
            raise DimensionError("direction length must match codomain dimension")
        return np.array(self.direction)

    @property
    def bound(self) -> float:
        """L-infinity norm (Euclidean norm of the value, sup over the box)."""
        if self.kind == "piecewise":
            return float(self.params["fn"].norms().max())
        scale = 1.0 if self.direction is None else float(np.linalg.norm(self.direction))
        if self.kind == "constant":
            c = np.asarray(self.params["c"])
            return float(np.linalg.norm(c)) if c.size > 1 else abs(float(c[0])) * scale
        return scale

    def label(self) -> str:
        p = self.params
        if self.kind == "constant":
            return f"constant({p['c'] if len(p['c']) > 1 else p['c'][0]})"
        if self.kind == "indicator":
            return f"indicator({p['lo']},{p['hi']})"
        if self.kind == "trig":
            return f"{p['phase']}(2pi*{p['k']}*s{p['axis'] + 1})"
        return "piecewise"

    def to_dict(self) -> dict:
        if self.kind == "piecewise":
            out = {"kind": "piecewise", "params": {"cells": self.params["fn"].to_json()}}
        else:
            out = {"kind": self.kind, "params": dict(self.params)}
        if self.direction is not None:
            out["direction"] = list(self.direction)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TestFunctional":
        kind, params = data["kind"], dict(data.get("params", {}))
        if kind == "constant":
            g = cls.constant(params.get("c", 1.0))
        elif kind == "indicator":
            g = cls.indicator(params["lo"], params["hi"])
        elif kind == "trig":
            g = cls.trig(params.get("k", 1), params.get("phase", "cos"), params.get("axis", 0))
        elif kind == "piecewise":
            g = cls.piecewise(SimpleFunction.from_json(params["cells"]))
        else:
            raise ValueError(f"unknown test functional kind {kind!r}")
        if data.get("direction") is not None:
            g = g.with_direction(data["direction"])
        return g

    # -- evaluation -------------------------------------------------------
    def _scalar_average(self, space: MeasureSpace) -> np.ndarray:
        lo, hi = space.cell_lo, space.cell_hi
        if self.kind == "indicator":
            a, b = np.array(self.params["lo"]), np.array(self.params["hi"])
            if a.size != space.ndim:
                raise DimensionError("indicator box dimension must match the space")
            overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
            return np.prod(overlap / (hi - lo), axis=1)
        if self.kind == "trig":
            k, axis = self.params["k"], self.params["axis"]
            if axis >= space.ndim:
                raise DimensionError("trig axis out of range")
            omega = 2.0 * math.pi * k
            mid = 0.5 * (lo[:, axis] + hi[:, axis])
            half = 0.5 * (hi[:, axis] - lo[:, axis])
            # exact cell average: f(mid) * sin(omega h)/(omega h), no cancellation
            damp = np.sinc(omega * half / math.pi)
            if self.params["phase"] == "cos":
                return np.cos(omega * mid) * damp
            return np.sin(omega * mid) * damp
        raise AssertionError(self.kind)

    def cell_averages(self, space: MeasureSpace, d: int) -> np.ndarray:
        """Exact average of g over each cell of ``space``, shape (cells, d)."""
        if self.kind == "constant":
            c = np.asarray(self.params["c"], float)
            vec = c if c.size == d and c.size > 1 else c[0] * self._dir(d)
            return np.tile(vec, (space.n_cells, 1))
        if self.kind == "piecewise":
            fn = self.params["fn"]
            if fn.d != d:
                raise DimensionError("piecewise functional has the wrong codomain dimension")
            ref, i_ref, j_ref = common_refinement(space, fn.space)
            # average over each coarse cell of the pieces inside it
            out = np.zeros((space.n_cells, d))
            np.add.at(out, i_ref, fn.values[j_ref] * ref.volumes[:, None])
            return out / space.volumes[:, None]
        return self._scalar_average(space)[:, None] * self._dir(d)

    def evaluate(self, points) -> np.ndarray:
        """Pointwise scalar value (direction not applied) at ``points`` (n, k)."""
        pts = np.atleast_2d(np.asarray(points, float))
        if self.kind == "constant":
            return np.full(pts.shape[0], float(self.params["c"][0]))
        if self.kind == "indicator":
            a, b = np.array(self.params["lo"]), np.array(self.params["hi"])
            return np.all((pts >= a) & (pts <= b), axis=1).astype(float)
        if self.kind == "trig":
            t = 2.0 * math.pi * self.params["k"] * pts[:, self.params["axis"]]
            return np.cos(t) if self.params["phase"] == "cos" else np.sin(t)
        raise ValueError("pointwise evaluation of piecewise functionals is not supported")


# ---------------------------------------------------------------------------
# operations


def _check_dim(phi: Integrand, x: SimpleFunction):
    if phi.dimension != x.d:
        raise DimensionError(f"integrand has dimension {phi.dimension}, function has {x.d}")


def integral_functional(phi: Integrand, x: SimpleFunction) -> float:
    """I_phi(x) = sum over cells of weight * phi(value); +inf off the domain."""
    _check_dim(phi, x)
    vals = np.asarray(phi.value(x.values), dtype=float).reshape(-1)
    if np.isposinf(vals).any():
        return math.inf
    return fsum(x.space.weights * vals)


def composition_distance(phi: Integrand, x: SimpleFunction, y: SimpleFunction) -> float:
    """Integral of |phi(x(s)) - phi(y(s))| (both must lie in dom I_phi)."""
    _check_dim(phi, x)
    space, i, j = common_refinement(x.space, y.space)
    a = np.asarray(phi.value(x.values[i]), float).reshape(-1)
    b = np.asarray(phi.value(y.values[j]), float).reshape(-1)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        return math.inf
    return fsum(space.weights * np.abs(a - b))


def l1_distance(x: SimpleFunction, y: SimpleFunction) -> float:
    if x.d != y.d:
        raise DimensionError("codomain dimensions differ")
    space, i, j = common_refinement(x.space, y.space)
    return fsum(space.weights * np.linalg.norm(x.values[i] - y.values[j], axis=1))


def pair(x: SimpleFunction, g: TestFunctional) -> float:
    """<x, g>: exact integral of the pointwise inner product."""
    avg = g.cell_averages(x.space, x.d)
    return fsum(x.space.weights * np.sum(x.values * avg, axis=1))


def deviation_measure(x: SimpleFunction, y: SimpleFunction, eta: float) -> float:
    """mu{ s : |x(s) - y(s)| >= eta }."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if x.d != y.d:
        raise DimensionError("codomain dimensions differ")
    space, i, j = common_refinement(x.space, y.space)
    far = np.linalg.norm(x.values[i] - y.values[j], axis=1) >= eta
    return fsum(space.weights[far])


def weak_gap(x: SimpleFunction, y: SimpleFunction, dictionary: Sequence[TestFunctional]) -> float:
    """max over g of |<x - y, g>| / max(1, |g|_inf); a weak-topology surrogate."""
    dictionary = list(dictionary)
    if not dictionary:
        raise ValueError("dictionary must not be empty")
    diff = x - y
    return max(abs(pair(diff, g)) / max(1.0, g.bound) for g in dictionary)


def trig_dictionary(max_frequency: int, include_constant: bool = True, axis: int = 0) -> list:
    out = [TestFunctional.constant(1.0)] if include_constant else []
    for k in range(1, max_frequency + 1):
        out += [TestFunctional.trig(k, "cos", axis), TestFunctional.trig(k, "sin", axis)]
    return out


def uniform_integrability_profile(xs: Iterable[SimpleFunction], thresholds: Sequence[float]) -> list:
    """For each threshold M: sup over n of the integral of |x_n| over {|x_n| > M}.

    Returns rows ``{"threshold", "sup", "argmax"}`` where ``argmax`` is the
    position in ``xs`` attaining the sup.
    """
    xs = list(xs)
    table = []
    for m in thresholds:
        tails = [fsum(x.space.weights * np.where(x.norms() > m, x.norms(), 0.0)) for x in xs]
        j = int(np.argmax(tails)) if tails else None
        table.append({"threshold": float(m), "sup": tails[j] if tails else 0.0, "argmax": j})
    return table
