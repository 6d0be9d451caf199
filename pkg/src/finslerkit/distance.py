"""Local quasi-distance via shooting, arc length, Busemann-Mayer recovery
and sphere sampling.

``distance`` is local by design: it inverts the exponential map inside a
normal neighbourhood, where the identity rho(p, exp_p(t v)) = t F(v) makes
F of the recovered initial velocity the distance.  Global infimum search is
out of scope; the polyline-infimum property in the tests is the only
global-consistency probe.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels as K
from .errors import (
    DegenerateInputError,
    DomainError,
    InversionError,
    NumericError,
)
from .geodesics import EXP_TOL, MAX_STEPS, flow
from .metrics import AxiomCheck, FinslerMetric, ValidationReport, evaluate_F
from .numcore import ChartPoint, PatchSpec, TangentVector, as_coords

#: default shooting tolerance on |exp_p(v) - q|
SHOOT_TOL = 1e-10

_SHOOT_STATUS = {
    K.SHOOT_OK: "converged",
    K.SHOOT_STALLED: "stalled",
    K.SHOOT_MAX_ITER: "iteration cap reached",
    K.SHOOT_BAD_START: "no evaluable starting guess",
    K.SHOOT_SINGULAR: "singular shooting Jacobian",
}


@dataclass(frozen=True)
class ShootingResult:
    """Outcome of inverting the exponential map at p."""

    v: TangentVector
    iterations: int
    residual: float


def invert_exp(m: FinslerMetric, p, q, tol: float = SHOOT_TOL) -> ShootingResult:
    """Newton shooting for the v with exp_p(v) = q.

    Initial guess is the chart difference q - p (scaled down a halving
    ladder when that overshoots); divergence or the 25-iteration cap raise
    InversionError, signalling that q lies outside the certified normal
    neighbourhood of p.
    """
    p = m.patch.require(as_coords(p, m.dim))
    q = m.patch.require(as_coords(q, m.dim))
    int_tol = min(EXP_TOL, tol / 10.0)
    v, iters, resid, status = K.shoot(
        m.code, m.params, p, q, q - p, tol, 25, int_tol, int_tol, MAX_STEPS
    )
    if status != K.SHOOT_OK:
        reason = _SHOOT_STATUS.get(int(status), "unknown failure")
        raise InversionError(
            f"exp inversion {reason} after {iters} iterations "
            f"(residual {resid:.3e}); target {q.tolist()} appears outside "
            f"the certified normal neighbourhood of {p.tolist()}"
        )
    return ShootingResult(TangentVector(p, v), int(iters), float(resid))


def distance(m: FinslerMetric, p, q, tol: float = SHOOT_TOL) -> float:
    """Quasi-distance rho(p, q) = F(p, exp_p^{-1}(q)), local scope."""
    p = as_coords(p, m.dim)
    q = as_coords(q, m.dim)
    if np.array_equal(p, q):
        return 0.0
    res = invert_exp(m, p, q, tol)
    return evaluate_F(m, p, res.v.components)


@dataclass(frozen=True)
class QuasiMetricOracle:
    """Black-box quasi-distance (p, q) -> real with a declared symmetry."""

    evaluator: Callable[[np.ndarray, np.ndarray], float]
    symmetric: bool
    provenance: str = "computed-from-metric"

    def __call__(self, p, q) -> float:
        return float(self.evaluator(as_coords(p), as_coords(q)))

    @classmethod
    def from_metric(cls, m: FinslerMetric, tol: float = SHOOT_TOL):
        return cls(
            lambda p, q: distance(m, p, q, tol),
            symmetric=m.reversible,
            provenance="computed-from-metric",
        )

    @classmethod
    def from_table(cls, rows: Sequence, dim: int, symmetric: bool):
        """Exact-lookup oracle over sampled (p, q, rho) rows."""
        table = {}
        for row in rows:
            row = [float(c) for c in row]
            key = (
                tuple(round(c, 9) for c in row[:dim]),
                tuple(round(c, 9) for c in row[dim : 2 * dim]),
            )
            table[key] = row[2 * dim]
            if symmetric:
                table.setdefault((key[1], key[0]), row[2 * dim])

        def look(p: np.ndarray, q: np.ndarray) -> float:
            key = (
                tuple(round(float(c), 9) for c in p),
                tuple(round(float(c), 9) for c in q),
            )
            if key not in table:
                raise NumericError("pair not present in the oracle table")
            return table[key]

        return cls(look, symmetric=symmetric, provenance="external")


def oracle_table(
    rho: QuasiMetricOracle, pairs: Sequence, target=None
) -> Optional[str]:
    """Export sampled oracle values as CSV rows (p..., q..., rho)."""
    buf = io.StringIO()
    w = csv.writer(buf)
    first = as_coords(pairs[0][0])
    dim = first.size
    w.writerow(
        [f"p{i}" for i in range(dim)]
        + [f"q{i}" for i in range(dim)]
        + ["rho"]
    )
    for p, q in pairs:
        p = as_coords(p, dim)
        q = as_coords(q, dim)
        w.writerow(
            [repr(float(c)) for c in p]
            + [repr(float(c)) for c in q]
            + [repr(rho(p, q))]
        )
    text = buf.getvalue()
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)
    return None


def load_oracle_table(source, dim: int, symmetric: bool) -> QuasiMetricOracle:
    """Read a CSV produced by oracle_table back into a lookup oracle."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    return QuasiMetricOracle.from_table(rows[1:], dim, symmetric)


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


def arc_length(
    m: FinslerMetric,
    samples,
    params: Optional[Sequence] = None,
    kind: str = "cubic",
    closed: bool = False,
    rel_tol: float = 1e-8,
    max_rounds: int = 12,
) -> float:
    """Finslerian length of the curve interpolating the given samples.

    The samples are interpolated (cubic spline by default, "linear" for
    polylines; ``closed`` uses a periodic spline) and integral F(c, c') dt
    is evaluated by composite 5-point Gauss quadrature, halving every
    interval until two successive estimates agree to ``rel_tol`` relative.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DegenerateInputError("need at least 2 curve samples")
    for row in pts:
        m.patch.require(row)
    if params is None:
        chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(chords == 0.0):
            raise DegenerateInputError("repeated consecutive curve samples")
        t = np.concatenate([[0.0], np.cumsum(chords)])
        t /= t[-1]
    else:
        t = np.asarray(params, dtype=float)
        if t.ndim != 1 or t.size != pts.shape[0] or np.any(np.diff(t) <= 0):
            raise DegenerateInputError(
                "params must be strictly increasing, one per sample"
            )

    if kind == "cubic":
        bc = "periodic" if closed else "natural"
        if closed and not np.allclose(pts[0], pts[-1]):
            raise DegenerateInputError("closed curve must repeat its endpoint")
        spline = CubicSpline(t, pts, bc_type=bc)
        dspline = spline.derivative()

        def curve(tt):
            return spline(tt), dspline(tt)

    elif kind == "linear":

        def curve(tt):
            tt = np.asarray(tt)
            idx = np.clip(np.searchsorted(t, tt, side="right") - 1, 0, t.size - 2)
            w = (tt - t[idx]) / (t[idx + 1] - t[idx])
            pos = pts[idx] + w[..., None] * (pts[idx + 1] - pts[idx])
            vel = (pts[idx + 1] - pts[idx]) / (t[idx + 1] - t[idx])[..., None]
            return pos, vel

    else:
        raise DegenerateInputError("kind must be 'cubic' or 'linear'")

    def quadrature(edges: np.ndarray) -> float:
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (a + b)
            half = 0.5 * (b - a)
            nodes = mid + half * _GAUSS_NODES
            pos, vel = curve(nodes)
            for w_i, x_i, v_i in zip(_GAUSS_WEIGHTS, pos, vel):
                total += w_i * half * evaluate_F(m, x_i, v_i)
        return total

    edges = t.copy()
    prev = quadrature(edges)
    for _ in range(max_rounds):
        refined = np.empty(2 * edges.size - 1)
        refined[0::2] = edges
        refined[1::2] = 0.5 * (edges[:-1] + edges[1:])
        edges = refined
        cur = quadrature(edges)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return float(cur)
        prev = cur
    raise NumericError("arc-length quadrature failed to converge")


def busemann_mayer_F(
    rho,
    alpha: Callable[[float], np.ndarray],
    levels: int = 4,
    t0: Optional[float] = None,
) -> float:
    """F(alpha(0), alpha'(0)) recovered from the metric's distance alone.

    Forms D_k = rho(alpha(0), alpha(t_k)) / t_k on t_k = t0 / 2^k,
    k = 0..levels, and Richardson-extrapolates the power series in t.
    """
    if levels < 1:
        raise DegenerateInputError("levels must be >= 1")
    a0 = as_coords(alpha(0.0))
    if t0 is None:
        t0 = 1e-2 * (1.0 + float(np.max(np.abs(a0))))
    vals = np.empty(levels + 1)
    for k in range(levels + 1):
        tk = t0 / 2.0**k
        vals[k] = float(rho(a0, as_coords(alpha(tk)))) / tk
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite oracle values along the curve")
    acc = vals
    for j in range(1, levels + 1):
        fac = 2.0**j
        acc = (fac * acc[1:] - acc[:-1]) / (fac - 1.0)
    return float(acc[0])


@dataclass(frozen=True)
class SphereSamples:
    """Points on the forward metric sphere S_rho(p, r), list-like."""

    points: tuple
    directions: np.ndarray
    dropped: int
    radius: float

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def sphere_sample(
    m: FinslerMetric, p, r: float, count: int, seed: int
) -> SphereSamples:
    """Seeded points exp_p(r u / F(u)) on the forward sphere of radius r.

    F-normalized directions make each sample exact up to integrator
    tolerance.  Directions whose geodesic exits the patch are dropped and
    counted in the result.
    """
    if r <= 0.0 or count < 1:
        raise DegenerateInputError("need r > 0 and count >= 1")
    p = m.patch.require(as_coords(p, m.dim))
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count, m.dim))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    points = []
    kept_dirs = []
    dropped = 0
    for u in dirs:
        F = evaluate_F(m, p, u)
        v = (r / F) * u
        status, _, x, _ = K.exp_final(
            m.code, m.params, p, v, 1.0, EXP_TOL, EXP_TOL, MAX_STEPS
        )
        if status != K.OK:
            dropped += 1
            continue
        points.append(ChartPoint(x))
        kept_dirs.append(u)
    return SphereSamples(
        tuple(points),
        np.vstack(kept_dirs) if kept_dirs else np.zeros((0, m.dim)),
        dropped,
        float(r),
    )


def quasimetric_audit(
    rho: QuasiMetricOracle,
    patch: PatchSpec,
    n_pairs: int,
    n_triples: int,
    seed: int,
) -> ValidationReport:
    """Sampled axiom checks for a quasi-distance oracle.

    Nonnegativity, identity of indiscernibles, triangle inequality, and a
    symmetry measurement compared against the oracle's declared flag.
    Oracle failures never raise; they surface as a failed check.
    """
    if n_pairs < 1 or n_triples < 1:
        raise DegenerateInputError("counts must be >= 1")
    rng = np.random.default_rng(seed)
    pts = patch.sample(rng, max(2 * n_pairs, 3 * n_triples))

    unevaluable = 0

    def ev(p, q):
        nonlocal unevaluable
        try:
            return float(rho(p, q))
        except Exception:
            unevaluable += 1
            return np.nan

    worst_nonneg = np.inf
    nonneg_wit = None
    worst_ident = 0.0
    ident_wit = None
    worst_tri = -np.inf
    tri_wit = None
    worst_sym = 0.0
    sym_wit = None

    for k in range(n_pairs):
        p, q = pts[2 * k], pts[2 * k + 1]
        d_pq = ev(p, q)
        d_qp = ev(q, p)
        d_pp = ev(p, p)
        if np.isfinite(d_pq) and d_pq < worst_nonneg:
            worst_nonneg = d_pq
            nonneg_wit = (tuple(p), tuple(q))
        if np.isfinite(d_pp) and abs(d_pp) > worst_ident:
            worst_ident = abs(d_pp)
            ident_wit = (tuple(p),)
        if np.isfinite(d_pq) and np.isfinite(d_qp):
            gap = abs(d_pq - d_qp)
            if gap > worst_sym:
                worst_sym = gap
                sym_wit = (tuple(p), tuple(q), d_pq, d_qp)

    for k in range(n_triples):
        a, b, c = pts[3 * k], pts[3 * k + 1], pts[3 * k + 2]
        d_ac = ev(a, c)
        d_ab = ev(a, b)
        d_bc = ev(b, c)
        if np.isfinite(d_ac) and np.isfinite(d_ab) and np.isfinite(d_bc):
            violation = d_ac - (d_ab + d_bc)
            if violation > worst_tri:
                worst_tri = violation
                tri_wit = (tuple(a), tuple(b), tuple(c))

    measured_symmetric = worst_sym < 1e-9
    checks = (
        AxiomCheck(
            "nonnegativity", worst_nonneg >= 0.0, min(worst_nonneg, 0.0) * -1.0,
            nonneg_wit,
        ),
        AxiomCheck("identity", worst_ident <= 1e-9, worst_ident, ident_wit),
        AxiomCheck("triangle", worst_tri <= 1e-9, max(worst_tri, 0.0), tri_wit),
        AxiomCheck(
            "symmetry",
            measured_symmetric == rho.symmetric,
            worst_sym,
            sym_wit,
        ),
        AxiomCheck("evaluable", unevaluable == 0, float(unevaluable), None),
    )
    return ValidationReport(checks, n_pairs + n_triples, seed)
