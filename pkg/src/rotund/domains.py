"""Domain descriptors for integrands on R^d.

A :class:`DomainSpec` answers membership questions (``contains``,
``interior_contains``) for batches of points and can draw random points
from the domain for property checks.  Symmetric matrices are handled in
``svec`` coordinates, where off-diagonal entries carry a factor sqrt(2) so
that the Euclidean inner product equals the trace pairing tr(MN).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionError

KINDS = (
    "all_space",
    "open_box",
    "closed_box",
    "open_unit_ball",
    "positive_definite_cone",
    # only used as the domain of a conjugate
    "negative_definite_cone",
)

_SQRT2 = math.sqrt(2.0)


def triangular_side(n: int) -> Optional[int]:
    """Return k with k(k+1)/2 == n, or None."""
    k = int(round((math.sqrt(8 * n + 1) - 1) / 2))
    return k if k >= 1 and k * (k + 1) // 2 == n else None


def svec(m: np.ndarray) -> np.ndarray:
    """Flatten symmetric matrices (..., k, k) to (..., k(k+1)/2)."""
    m = np.asarray(m, dtype=float)
    k = m.shape[-1]
    iu, ju = np.triu_indices(k)
    scale = np.where(iu == ju, 1.0, _SQRT2)
    return m[..., iu, ju] * scale


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    k = triangular_side(v.shape[-1])
    if k is None:
        raise DimensionError(f"length {v.shape[-1]} is not a triangular number")
    iu, ju = np.triu_indices(k)
    scale = np.where(iu == ju, 1.0, 1.0 / _SQRT2)
    out = np.zeros(v.shape[:-1] + (k, k))
    out[..., iu, ju] = v * scale
    out[..., ju, iu] = v * scale
    return out


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    dimension: int
    lo: tuple = field(default=())
    hi: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.dimension < 1:
            raise DimensionError("dimension must be positive")
        if self.kind in ("open_box", "closed_box"):
            if len(self.lo) != self.dimension or len(self.hi) != self.dimension:
                raise DimensionError("box bounds must have one entry per coordinate")
            for a, b in zip(self.lo, self.hi):
                if not a < b:
                    raise ValueError(f"box needs lo < hi, got [{a}, {b}]")
        if self.kind.endswith("definite_cone") and triangular_side(self.dimension) is None:
            raise DimensionError("definite cones need a triangular dimension")

    # -- constructors -------------------------------------------------
    @classmethod
    def all_space(cls, d: int) -> "DomainSpec":
        return cls("all_space", d)

    @classmethod
    def open_box(cls, lo, hi) -> "DomainSpec":
        lo, hi = tuple(float(a) for a in lo), tuple(float(b) for b in hi)
        return cls("open_box", len(lo), lo, hi)

    @classmethod
    def closed_box(cls, lo, hi) -> "DomainSpec":
        lo, hi = tuple(float(a) for a in lo), tuple(float(b) for b in hi)
        return cls("closed_box", len(lo), lo, hi)

    @classmethod
    def open_unit_ball(cls, d: int) -> "DomainSpec":
        return cls("open_unit_ball", d)

    @classmethod
    def positive_definite_cone(cls, side: int) -> "DomainSpec":
        return cls("positive_definite_cone", side * (side + 1) // 2)

    @classmethod
    def negative_definite_cone(cls, side: int) -> "DomainSpec":
        return cls("negative_definite_cone", side * (side + 1) // 2)

    @property
    def matrix_side(self) -> Optional[int]:
        if not self.kind.endswith("definite_cone"):
            return None
        return triangular_side(self.dimension)

    @property
    def is_open(self) -> bool:
        if self.kind == "closed_box":
            # a closed box with every endpoint infinite is all of R^d
            return all(math.isinf(a) for a in self.lo + self.hi)
        return True

    # -- membership ---------------------------------------------------
    def _points(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.dimension == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        if z.shape[-1] != self.dimension:
            raise DimensionError(f"expected trailing dimension {self.dimension}, got {z.shape}")
        return z

    def contains(self, z) -> np.ndarray:
        return self._member(self._points(z), interior=False)

    def interior_contains(self, z) -> np.ndarray:
        return self._member(self._points(z), interior=True)

    def _member(self, z: np.ndarray, interior: bool) -> np.ndarray:
        finite = np.all(np.isfinite(z), axis=-1)
        if self.kind == "all_space":
            return finite
        if self.kind in ("open_box", "closed_box"):
            lo, hi = np.array(self.lo), np.array(self.hi)
            if self.kind == "open_box" or interior:
                inside = (z > lo) & (z < hi)
            else:
                inside = (z >= lo) & (z <= hi)
            return finite & np.all(inside, axis=-1)
        if self.kind == "open_unit_ball":
            with np.errstate(invalid="ignore", over="ignore"):
                return finite & (np.sum(z * z, axis=-1) < 1.0)
        # definite cones: Cholesky succeeds exactly on PD matrices
        sign = 1.0 if self.kind == "positive_definite_cone" else -1.0
        return finite & _is_positive_definite(sign * np.where(np.isfinite(z), z, 0.0))

    # -- sampling -----------------------------------------------------
    def sampling_box(self, span: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
        """Finite box from which interior samples are drawn."""
        d = self.dimension
        if self.kind in ("open_box", "closed_box"):
            lo, hi = np.array(self.lo), np.array(self.hi)
            lo_s = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi - span, -span))
            hi_s = np.where(np.isfinite(hi), hi, lo_s + np.where(np.isfinite(lo), span, 2 * span))
            return lo_s, hi_s
        if self.kind == "open_unit_ball":
            return -np.ones(d), np.ones(d)
        return -span * np.ones(d), span * np.ones(d)

    def sample(self, rng: np.random.Generator, n: int, margin: float = 1e-3,
               span: float = 10.0) -> np.ndarray:
        """Draw ``n`` points from a margin-shrunk copy of the domain.

        Unbounded directions are truncated to a window of width ``span``.
        """
        d = self.dimension
        if self.kind == "open_unit_ball":
            direction = rng.standard_normal((n, d))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            radius = (1.0 - 2.0 * margin) * rng.random(n) ** (1.0 / d)
            return direction * radius[:, None]
        if self.kind.endswith("definite_cone"):
            k = self.matrix_side
            q, _ = np.linalg.qr(rng.standard_normal((n, k, k)))
            eig = rng.uniform(0.25, 2.5, size=(n, k))
            mats = np.einsum("nij,nj,nkj->nik", q, eig, q)
            sign = 1.0 if self.kind == "positive_definite_cone" else -1.0
            return sign * svec(mats)
        lo, hi = self.sampling_box(span)
        width = hi - lo
        return rng.uniform(lo + margin * width, hi - margin * width, size=(n, d))

    def sample_faces(self, rng: np.random.Generator, n: int, span: float = 10.0) -> np.ndarray:
        """Draw points with some coordinates pinned to finite closed endpoints.

        Only closed boxes have such faces; other kinds return an empty array.
        """
        d = self.dimension
        if self.kind != "closed_box":
            return np.empty((0, d))
        lo, hi = self.sampling_box(span)
        pts = rng.uniform(lo, hi, size=(n, d))
        finite_lo = np.isfinite(np.array(self.lo))
        finite_hi = np.isfinite(np.array(self.hi))
        for row in pts:
            j = rng.integers(d)
            choices = [v for v, ok in ((self.lo[j], finite_lo[j]), (self.hi[j], finite_hi[j])) if ok]
            if choices:
                row[j] = choices[rng.integers(len(choices))]
        return pts

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dimension": self.dimension}
        if self.kind in ("open_box", "closed_box"):
            out["lo"] = [_json_float(a) for a in self.lo]
            out["hi"] = [_json_float(b) for b in self.hi]
        if self.kind.endswith("definite_cone"):
            out["matrix_side"] = self.matrix_side
        return out


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _is_positive_definite(z: np.ndarray) -> np.ndarray:
    mats = smat(z)
    flat = mats.reshape((-1,) + mats.shape[-2:])
    ok = np.empty(flat.shape[0], dtype=bool)
    try:
        np.linalg.cholesky(flat)
        ok[:] = True
    except np.linalg.LinAlgError:
        for i, m in enumerate(flat):
            try:
                np.linalg.cholesky(m)
                ok[i] = True
            except np.linalg.LinAlgError:
                ok[i] = False
    return ok.reshape(mats.shape[:-2])
