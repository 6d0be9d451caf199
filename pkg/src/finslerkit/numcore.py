"""Coordinate patches, points, tangent vectors and the shared numerics.

Central differences with Richardson extrapolation are the single
finite-difference backend used everywhere; closed-form derivatives provided
by the metric families are cross-validated against this path in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, DomainError, NumericError

# Default relative FD step: cube root of machine epsilon.
DEFAULT_FD_STEP = float(np.finfo(float).eps ** (1.0 / 3.0))

# Margin factor: evaluations closer than BOUNDARY_MARGIN_FACTOR * fd_step
# (coordinate-scaled) to the patch boundary are refused, not clamped.
BOUNDARY_MARGIN_FACTOR = 10.0


def as_coords(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce array-like / ChartPoint / TangentVector input to float64."""
    if isinstance(x, ChartPoint):
        arr = x.coords
    elif isinstance(x, TangentVector):
        arr = x.components
    else:
        arr = np.asarray(x, dtype=float)
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DegenerateInputError("expected a nonempty 1-d coordinate array")
    if dim is not None and arr.size != dim:
        raise DegenerateInputError(
            f"expected {dim} coordinates, got {arr.size}"
        )
    return arr


@dataclass(frozen=True)
class PatchSpec:
    """Open coordinate patch: per-axis open bounds plus an optional constraint.

    ``constraint`` maps a point to a signed margin, positive inside the
    domain (e.g. ``R - |x|`` for a disk); ``None`` means no extra constraint.
    ``sample_lo``/``sample_hi`` bound the box used for seeded sampling.
    """

    dim: int
    bounds: tuple = ()
    constraint: Optional[Callable[[np.ndarray], float]] = None
    sample_lo: tuple = ()
    sample_hi: tuple = ()

    def __post_init__(self):
        if self.dim < 1:
            raise DegenerateInputError("patch dimension must be >= 1")
        bounds = self.bounds or tuple((-np.inf, np.inf) for _ in range(self.dim))
        if len(bounds) != self.dim:
            raise DegenerateInputError("one bounds pair per axis required")
        object.__setattr__(self, "bounds", tuple(tuple(map(float, b)) for b in bounds))
        lo = self.sample_lo or tuple(
            max(b[0], -2.0) + (0.1 if np.isfinite(b[0]) else 0.0) for b in bounds
        )
        hi = self.sample_hi or tuple(
            min(b[1], 2.0) - (0.1 if np.isfinite(b[1]) else 0.0) for b in bounds
        )
        object.__setattr__(self, "sample_lo", tuple(map(float, lo)))
        object.__setattr__(self, "sample_hi", tuple(map(float, hi)))

    def boundary_margin(self, x) -> float:
        """Distance-like margin to the boundary; positive strictly inside."""
        x = as_coords(x, self.dim)
        m = np.inf
        for i, (lo, hi) in enumerate(self.bounds):
            if np.isfinite(lo):
                m = min(m, x[i] - lo)
            if np.isfinite(hi):
                m = min(m, hi - x[i])
        if self.constraint is not None:
            m = min(m, float(self.constraint(x)))
        return float(m)

    def contains(self, x, margin: float = 0.0) -> bool:
        return self.boundary_margin(x) > margin

    def require(self, x, margin: float = 0.0) -> np.ndarray:
        x = as_coords(x, self.dim)
        if not self.contains(x, margin):
            raise DomainError(
                f"point {x.tolist()} outside patch (margin {margin:.3g})"
            )
        return x

    def sample(self, rng: np.random.Generator, n: int, margin: float = 1e-6):
        """n seeded points inside the sample box satisfying the constraint."""
        lo = np.asarray(self.sample_lo)
        hi = np.asarray(self.sample_hi)
        out = np.empty((n, self.dim))
        got = 0
        for _ in range(1000 * n):
            cand = lo + (hi - lo) * rng.random(self.dim)
            if self.contains(cand, margin):
                out[got] = cand
                got += 1
                if got == n:
                    return out
        raise DomainError("patch sampling failed: constraint rejects the box")


class ChartPoint:
    """Immutable point in chart coordinates."""

    __slots__ = ("coords",)

    def __init__(self, coords):
        arr = np.array(coords, dtype=float).reshape(-1)
        if arr.size == 0:
            raise DegenerateInputError("empty coordinate sequence")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @property
    def dim(self) -> int:
        return self.coords.size

    def __array__(self, dtype=None):
        return np.asarray(self.coords, dtype=dtype)

    def __len__(self):
        return self.coords.size

    def __getitem__(self, i):
        return self.coords[i]

    def __iter__(self):
        return iter(self.coords)

    def __repr__(self):
        return f"ChartPoint({self.coords.tolist()})"


class TangentVector:
    """Vector attached to a base point (components in chart coordinates)."""

    __slots__ = ("base", "components")

    def __init__(self, base, components):
        b = base if isinstance(base, ChartPoint) else ChartPoint(base)
        arr = np.array(components, dtype=float).reshape(-1)
        if arr.size != b.dim:
            raise DegenerateInputError("component length must equal base dim")
        arr.setflags(write=False)
        object.__setattr__(self, "base", b)
        object.__setattr__(self, "components", arr)

    @property
    def dim(self) -> int:
        return self.components.size

    def __array__(self, dtype=None):
        return np.asarray(self.components, dtype=dtype)

    def __repr__(self):
        return (
            f"TangentVector(base={self.base.coords.tolist()}, "
            f"components={self.components.tolist()})"
        )


@dataclass(frozen=True)
class DiffConfig:
    """Finite-difference configuration shared by all FD-based operations."""

    fd_step: float = DEFAULT_FD_STEP
    richardson_levels: int = 2

    def __post_init__(self):
        if not 0.0 < self.fd_step <= 1e-2:
            raise DegenerateInputError("fd_step must lie in (0, 1e-2]")
        if self.richardson_levels < 1:
            raise DegenerateInputError("richardson_levels must be >= 1")


DEFAULT_DIFF = DiffConfig()


def _richardson(estimates: np.ndarray, order: int = 2) -> float:
    """Extrapolate a sequence D(h), D(h/2), ... of order-``order`` estimates."""
    R = [np.asarray(estimates, dtype=float)]
    k = len(estimates)
    for j in range(1, k):
        fac = 2.0 ** (order * j)
        prev = R[-1]
        R.append((fac * prev[1:] - prev[:-1]) / (fac - 1.0))
    return float(R[-1][0])


def directional_derivative(
    f: Callable[[np.ndarray], float],
    p,
    v,
    cfg: DiffConfig = DEFAULT_DIFF,
) -> float:
    """Derivative of the scalar field f at p along v.

    Central differences at steps h, h/2, ..., Richardson-extrapolated;
    error O(h^(2 * richardson_levels)).  The base step is
    ``fd_step * (1 + max|p_i|)`` in arc-length units of v.
    """
    p = as_coords(p)
    v = as_coords(v, p.size)
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        raise DegenerateInputError("direction vector must be nonzero")
    h0 = cfg.fd_step * (1.0 + float(np.max(np.abs(p)))) / vn
    ests = np.empty(cfg.richardson_levels)
    for k in range(cfg.richardson_levels):
        h = h0 / 2.0**k
        fp = float(f(p + h * v))
        fm = float(f(p - h * v))
        ests[k] = (fp - fm) / (2.0 * h)
    if not np.all(np.isfinite(ests)):
        raise NumericError("non-finite field values in difference stencil")
    return _richardson(ests)


def jacobian(
    mapping: Callable[[np.ndarray], np.ndarray],
    p,
    cfg: DiffConfig = DEFAULT_DIFF,
) -> np.ndarray:
    """dim_out x dim_in matrix of partial derivatives of the map at p."""
    p = as_coords(p)
    f0 = np.asarray(mapping(p), dtype=float).reshape(-1)
    J = np.empty((f0.size, p.size))
    for j in range(p.size):
        h0 = cfg.fd_step * (1.0 + abs(p[j]))
        ests = np.empty((cfg.richardson_levels, f0.size))
        for k in range(cfg.richardson_levels):
            h = h0 / 2.0**k
            pp = p.copy()
            pm = p.copy()
            pp[j] += h
            pm[j] -= h
            ests[k] = (
                np.asarray(mapping(pp), dtype=float).reshape(-1)
                - np.asarray(mapping(pm), dtype=float).reshape(-1)
            ) / (2.0 * h)
        if not np.all(np.isfinite(ests)):
            raise NumericError("non-finite map values in difference stencil")
        for i in range(f0.size):
            J[i, j] = _richardson(ests[:, i])
    return J


# Fixed seed for the extra orthogonalization candidates; part of the
# determinism contract of chart construction.
_CANDIDATE_SEED = 1724


def null_space_basis(rows, tol: float, dim: Optional[int] = None) -> np.ndarray:
    """Orthonormal basis of the common kernel of the given covectors.

    Deterministic: modified Gram-Schmidt over the canonical basis followed
    by a fixed seeded candidate set.  Returns an array whose rows are the
    basis vectors; the basis has dimension >= dim - len(rows).  An empty
    row list needs the ambient dimension, either via ``dim`` or by passing
    an array of shape (0, dim).
    """
    if isinstance(rows, np.ndarray) and rows.ndim == 2:
        mat = np.asarray(rows, dtype=float)
        dim = mat.shape[1] if dim is None else dim
    else:
        rows = [as_coords(r, dim) for r in rows]
        if rows:
            dim = rows[0].size
        elif dim is None:
            raise DegenerateInputError(
                "empty row list: pass dim= or an array of shape (0, dim)"
            )
        mat = np.vstack(rows) if rows else np.zeros((0, dim))
    if mat.shape[1] != dim:
        raise DegenerateInputError("constraint rows must have length dim")
    return _null_space(mat, dim, tol)


def _null_space(mat: np.ndarray, dim: int, tol: float) -> np.ndarray:
    for r in mat:
        if np.linalg.norm(r) == 0.0:
            raise DegenerateInputError("all-zero constraint row")
    # Orthonormalize the row space (modified Gram-Schmidt).
    row_basis = []
    for r in mat:
        w = r.astype(float).copy()
        for b in row_basis:
            w -= (w @ b) * b
        nw = np.linalg.norm(w)
        if nw > 1e-12 * max(1.0, np.linalg.norm(r)):
            row_basis.append(w / nw)
    rng = np.random.default_rng(_CANDIDATE_SEED)
    candidates = list(np.eye(dim)) + list(rng.standard_normal((2 * dim, dim)))
    basis = []
    accept = max(100.0 * tol, 1e-10)
    for c in candidates:
        w = c.astype(float).copy()
        for b in row_basis:
            w -= (w @ b) * b
        for b in basis:
            w -= (w @ b) * b
        nw = np.linalg.norm(w)
        if nw > accept:
            basis.append(w / nw)
    out = np.array(basis) if basis else np.zeros((0, dim))
    for r in mat:
        resid = np.abs(out @ r) if out.size else np.zeros(0)
        if resid.size and resid.max() > tol * np.linalg.norm(r):
            raise NumericError("null-space candidate fails annihilation check")
    return out
