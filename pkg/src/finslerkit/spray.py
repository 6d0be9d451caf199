"""Canonical spray coefficients and the residual checks certifying them.

The spray is constructed by instantiating the energy characterization
``S(X^v E) - X^c E = 0`` on the dim coordinate fields, which forces the
linear system

    g(x, y) . G(x, y) = (1/2) (y^k d2E/dx^k dy - dE/dx)

solved with a symmetric positive-definite factorization.  The intrinsic
two-form equation is deliberately not implemented; by linearity of the
residual over function multiples of coordinate fields (residual of f(x) X
equals f times the residual of X), the coordinate fields already determine
the spray, and one non-coordinate field is spot-checked in the tests.

Residual evaluation composes finite differences of F (or E) with the
spray's vector-field action, so it exercises a path independent of the
closed-form derivatives used for construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import kernels as K
from .errors import DomainError, NumericError, SingularityError
from .metrics import FinslerMetric, fundamental_tensor
from .numcore import as_coords

#: conditioning limit for the fundamental-tensor solve
COND_LIMIT = 1e10


@dataclass(frozen=True)
class SprayField:
    """Spray through its coefficient evaluator G(x, y) and source metric."""

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    source: FinslerMetric
    label: str = "canonical"

    def __call__(self, x, y) -> np.ndarray:
        return np.asarray(
            self.evaluator(as_coords(x, self.source.dim), as_coords(y, self.source.dim)),
            dtype=float,
        )


def spray_coefficients(m: FinslerMetric, x, y) -> np.ndarray:
    """Coefficients G(x, y) of the canonical spray of m.

    Solves the fundamental-tensor linear system; refuses (rather than
    regularizes) when the tensor's condition number exceeds 1e10.
    """
    x = as_coords(x, m.dim)
    y = as_coords(y, m.dim)
    g = fundamental_tensor(m, x, y)
    if np.linalg.cond(g) > COND_LIMIT:
        raise SingularityError(
            "fundamental tensor numerically singular "
            f"(cond > {COND_LIMIT:.0e}) at x={x.tolist()}, y={y.tolist()}"
        )
    rhs = np.asarray(K.spray_rhs(m.code, m.params, x, y))
    try:
        return cho_solve(cho_factor(g, lower=True), rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"fundamental-tensor solve failed: {exc}") from None


def canonical_spray(m: FinslerMetric) -> SprayField:
    """The canonical spray of m, evaluated through the compiled kernel."""

    def G(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.asarray(K.spray_G(m.code, m.params, x, y))
        if not np.all(np.isfinite(out)):
            raise SingularityError(
                f"spray evaluation failed at x={x.tolist()}, y={y.tolist()}"
            )
        return out

    return SprayField(G, m, "canonical")


def _F_eval(m: FinslerMetric):
    """Raw kernel evaluator for FD stencils; NaN signals a patch exit."""

    def F(x: np.ndarray, y: np.ndarray) -> float:
        return float(K.finsler_F(m.code, m.params, x, y))

    return F


def _stencil_checked(value: float) -> float:
    if not np.isfinite(value):
        raise DomainError("finite-difference stencil left the patch")
    return value


def _fd_pack(f, x, y, base_step: float, levels: int):
    """First and second partials of f(x, y) needed by the residuals.

    Returns (fx, fy, fxy, fyy): d f/dx_j, d f/dy_j, y-row-indexed cross
    matrix fxy[i, j] = d2 f/dx_i dy_j, and fyy[i, j] = d2 f/dy_i dy_j.
    Central differences, Richardson-extrapolated over ``levels`` halvings.
    """
    n = x.size
    hx = base_step * (1.0 + np.abs(x))
    hy = base_step * (1.0 + np.abs(y))

    def rich(vals):
        # vals[k] has error O(h^2 / 4^k)
        acc = np.asarray(vals, dtype=float)
        for j in range(1, len(vals)):
            fac = 4.0**j
            acc = (fac * acc[1:] - acc[:-1]) / (fac - 1.0)
        return acc[0]

    fx = np.empty(n)
    fy = np.empty(n)
    fxy = np.empty((n, n))
    fyy = np.empty((n, n))
    for j in range(n):
        vals_x = []
        vals_y = []
        for k in range(levels):
            h = hx[j] / 2.0**k
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            vals_x.append(
                (_stencil_checked(f(xp, y)) - _stencil_checked(f(xm, y)))
                / (2.0 * h)
            )
            h = hy[j] / 2.0**k
            yp = y.copy()
            ym = y.copy()
            yp[j] += h
            ym[j] -= h
            vals_y.append((f(x, yp) - f(x, ym)) / (2.0 * h))
        fx[j] = rich(vals_x)
        fy[j] = rich(vals_y)
    for i in range(n):
        for j in range(n):
            vals_xy = []
            vals_yy = []
            for k in range(levels):
                hi = hx[i] / 2.0**k
                hj = hy[j] / 2.0**k
                xp = x.copy()
                xm = x.copy()
                xp[i] += hi
                xm[i] -= hi
                yp = y.copy()
                ym = y.copy()
                yp[j] += hj
                ym[j] -= hj
                vals_xy.append(
                    (
                        _stencil_checked(f(xp, yp))
                        - _stencil_checked(f(xp, ym))
                        - _stencil_checked(f(xm, yp))
                        + _stencil_checked(f(xm, ym))
                    )
                    / (4.0 * hi * hj)
                )
                gi = hy[i] / 2.0**k
                ypi = y.copy()
                ymi = y.copy()
                ypi[i] += gi
                ymi[i] -= gi
                yppj = ypi.copy()
                ypmj = ypi.copy()
                ymmj = ymi.copy()
                ympj = ymi.copy()
                yppj[j] += hj
                ypmj[j] -= hj
                ympj[j] += hj
                ymmj[j] -= hj
                vals_yy.append(
                    (f(x, yppj) - f(x, ypmj) - f(x, ympj) + f(x, ymmj))
                    / (4.0 * gi * hj)
                )
            fxy[i, j] = rich(vals_xy)
            fyy[i, j] = rich(vals_yy)
    if not (
        np.all(np.isfinite(fx))
        and np.all(np.isfinite(fy))
        and np.all(np.isfinite(fxy))
        and np.all(np.isfinite(fyy))
    ):
        raise NumericError("non-finite finite-difference derivatives")
    return fx, fy, fxy, fyy


@dataclass(frozen=True)
class SprayResiduals:
    """Residuals of the intrinsic spray characterization at one (x, y).

    ``rapcsak[j]`` is S(X^v F) - X^c F for the j-th coordinate field and
    ``sf`` is the value of SF; both vanish exactly for the canonical spray.
    """

    rapcsak: np.ndarray
    sf: float
    F_value: float

    @property
    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.rapcsak)), abs(self.sf)))


def canonical_spray_residuals(
    m: FinslerMetric,
    x,
    y,
    spray: Optional[SprayField] = None,
    base_step: float = 1e-3,
    levels: int = 2,
) -> SprayResiduals:
    """Rapcsak and SF residuals of a spray (canonical by default) at (x, y).

    All derivatives of F are taken by finite differences, so a near-zero
    result certifies the closed-form G against an independent route.
    """
    x = as_coords(x, m.dim)
    y = as_coords(y, m.dim)
    m.patch.require(x)
    if not np.any(y):
        raise SingularityError("spray residuals undefined at y = 0")
    G = spray(x, y) if spray is not None else spray_coefficients(m, x, y)
    f = _F_eval(m)
    fx, fy, fxy, fyy = _fd_pack(f, x, y, base_step, levels)
    rap = y @ fxy - 2.0 * (G @ fyy) - fx
    sf = float(y @ fx - 2.0 * G @ fy)
    return SprayResiduals(rap, sf, float(f(x, y)))


def energy_residuals(
    m: FinslerMetric,
    x,
    y,
    spray: Optional[SprayField] = None,
    base_step: float = 1e-3,
    levels: int = 2,
) -> np.ndarray:
    """Coordinate-field energy residuals S(X^v E) - X^c E at (x, y).

    Zero for the canonical spray by construction; used by the uniqueness
    probe and the (ii) == (iii) expansion identity test.
    """
    x = as_coords(x, m.dim)
    y = as_coords(y, m.dim)
    m.patch.require(x)
    G = spray(x, y) if spray is not None else spray_coefficients(m, x, y)
    f = _F_eval(m)

    def e(xx, yy):
        v = f(xx, yy)
        return 0.5 * v * v

    ex, ey, exy, eyy = _fd_pack(e, x, y, base_step, levels)
    return y @ exy - 2.0 * (G @ eyy) - ex


def field_residual(
    m: FinslerMetric,
    x,
    y,
    coeffs: Callable[[np.ndarray], np.ndarray],
    spray: Optional[SprayField] = None,
    base_step: float = 1e-3,
) -> float:
    """S(X^v F) - X^c F for a position-dependent field X = sum_j c_j(x) d_j.

    Evaluated by nested finite differences, independent of the linearity
    argument it is used to test: residual(f X) should equal f * residual(X).
    """
    x = as_coords(x, m.dim)
    y = as_coords(y, m.dim)
    G = spray(x, y) if spray is not None else spray_coefficients(m, x, y)
    f = _F_eval(m)
    n = x.size

    def phi(xx, yy):
        # X^v F = sum_j c_j(x) dF/dy_j, inner derivative by central FD
        c = np.asarray(coeffs(xx), dtype=float)
        out = 0.0
        for j in range(n):
            h = 1e-4 * (1.0 + abs(yy[j]))
            yp = yy.copy()
            ym = yy.copy()
            yp[j] += h
            ym[j] -= h
            out += c[j] * (f(xx, yp) - f(xx, ym)) / (2.0 * h)
        return out

    # S(phi) = y^i dphi/dx_i - 2 G^i dphi/dy_i
    s_phi = 0.0
    for i in range(n):
        h = base_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        s_phi += y[i] * (phi(xp, y) - phi(xm, y)) / (2.0 * h)
        h = base_step * (1.0 + abs(y[i]))
        yp = y.copy()
        ym = y.copy()
        yp[i] += h
        ym[i] -= h
        s_phi -= 2.0 * G[i] * (phi(x, yp) - phi(x, ym)) / (2.0 * h)

    # X^c F = c_j dF/dx_j + (y . grad c_j) dF/dy_j
    c0 = np.asarray(coeffs(x), dtype=float)
    xc = 0.0
    for j in range(n):
        h = base_step * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        xc += c0[j] * (f(xp, y) - f(xm, y)) / (2.0 * h)
    for j in range(n):
        grad_cj = np.zeros(n)
        for i in range(n):
            h = base_step * (1.0 + abs(x[i]))
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            grad_cj[i] = (
                float(np.asarray(coeffs(xp), dtype=float)[j])
                - float(np.asarray(coeffs(xm), dtype=float)[j])
            ) / (2.0 * h)
        h = 1e-4 * (1.0 + abs(y[j]))
        yp = y.copy()
        ym = y.copy()
        yp[j] += h
        ym[j] -= h
        xc += float(y @ grad_cj) * (f(x, yp) - f(x, ym)) / (2.0 * h)
    return float(s_phi - xc)


def spray_homogeneity_defect(s: SprayField, samples: int, seed: int) -> float:
    """max over seeded samples and lam in {0.5, 2, 10} of
    |G(x, lam y) - lam^2 G(x, y)|_inf / lam^2."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    m = s.source
    xs = m.patch.sample(rng, samples)
    ys = rng.standard_normal((samples, m.dim))
    ys /= np.linalg.norm(ys, axis=1)[:, None]
    worst = 0.0
    for x, y in zip(xs, ys):
        G1 = s(x, y)
        for lam in (0.5, 2.0, 10.0):
            G2 = s(x, lam * y)
            defect = float(np.max(np.abs(G2 - lam * lam * G1))) / (lam * lam)
            worst = max(worst, defect)
    return worst
