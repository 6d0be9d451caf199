"""Distance coordinate systems: charts whose coordinates are distances
from n nearby base points.

Construction is iterative: each new direction v_k is drawn from the common
tangent space of the already-built distance spheres, and its base point is
an emanating point a quarter budget backward along v_k.  The chart map
theta = (r_{p_1}, ..., r_{p_n}) then has a triangular derivative at the
center, which certifies local invertibility.

Index convention (fixed here, documented): the stored Jacobian has

    J[i, j] = v_j(r_{p_i})

i.e. row i is the chart component r_{p_i}, column j the direction v_j, so
J is the derivative of theta in the direction basis.  In this orientation
the triangularity statement reads J[i, j] = 0 for j > i: J is lower
triangular with positive diagonal, and the diagonal equals
lam_i * F(w_i) for the stored emanating data.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distance import distance, invert_exp
from .errors import (
    ChartConstructionError,
    ChartEvaluationError,
    DegenerateConfigurationError,
    DomainError,
    EmanatingError,
    InversionError,
    NumericError,
    OutsideCertifiedError,
)
from .geodesics import emanating_point, flow, normal_radius
from .metrics import FinslerMetric, evaluate_F, make_metric
from .numcore import ChartPoint, DiffConfig, as_coords, null_space_basis

#: accuracy grade for chart-derivative finite differences.  The base points
#: sit only budget/4 from the center, so the distance fields carry large
#: high-order derivatives; three Richardson levels at a half-percent step
#: keep the off-triangle mass a safe three orders below its tolerance.
J_SHOOT_TOL = 1e-11
J_DIFF = DiffConfig(fd_step=3e-3, richardson_levels=3)

#: thresholds certified at construction time
TRIANGULAR_TOL = 1e-6
ROUNDTRIP_TOL = 1e-7


def _distance_field(m: FinslerMetric, base: np.ndarray):
    def r(a: np.ndarray) -> float:
        return distance(m, base, a, tol=J_SHOOT_TOL)

    return r


def _gradient(m: FinslerMetric, base: np.ndarray, p: np.ndarray) -> np.ndarray:
    """FD gradient of a -> distance(base, a) at p, J-grade accuracy."""
    r = _distance_field(m, base)
    n = p.size
    g = np.empty(n)
    for j in range(n):
        h0 = J_DIFF.fd_step * (1.0 + abs(p[j]))
        ests = []
        for k in range(J_DIFF.richardson_levels):
            h = h0 / 2.0**k
            pp = p.copy()
            pm = p.copy()
            pp[j] += h
            pm[j] -= h
            ests.append((r(pp) - r(pm)) / (2.0 * h))
        acc = np.asarray(ests)
        for jj in range(1, len(ests)):
            fac = 4.0**jj
            acc = (fac * acc[1:] - acc[:-1]) / (fac - 1.0)
        g[j] = acc[0]
    return g


def sphere_tangent_basis(m: FinslerMetric, p, base_points) -> np.ndarray:
    """Orthonormal basis of the common tangent space at p of the distance
    spheres around the given base points.

    Gradients of r_{p_i} are taken by finite differences of the shooting
    distance; a vanishing gradient (p on top of a base point, or inversion
    trouble) is a degenerate configuration.
    """
    p = m.patch.require(as_coords(p, m.dim))
    rows = []
    for i, b in enumerate(base_points):
        b = as_coords(b, m.dim)
        try:
            g = _gradient(m, b, p)
        except InversionError as exc:
            raise DegenerateConfigurationError(
                f"distance gradient for base point {i} unavailable: {exc}"
            ) from None
        if np.linalg.norm(g) < 1e-6:
            raise DegenerateConfigurationError(
                f"vanishing distance gradient for base point {i} at {p.tolist()}"
            )
        rows.append(g)
    return null_space_basis(rows, tol=1e-7, dim=m.dim)


@dataclass(frozen=True)
class DistanceChart:
    """Distance coordinates theta = (r_{p_1}, ..., r_{p_n}) around center.

    ``directions`` holds the F-unit seeds v_j (rows), ``lams``/``ws`` the
    emanating data per base point (lam in the diagonal-formula convention
    J[i,i] = lams[i] * F(w_i)), ``J`` the derivative of theta in the
    direction basis at the center (lower triangular), ``certified_radius``
    the probed invertibility radius and ``image_halfwidth`` the certified
    box around theta(center) accepted by invert.
    """

    metric: FinslerMetric
    center: np.ndarray
    base_points: np.ndarray
    radii: np.ndarray
    directions: np.ndarray
    lams: np.ndarray
    ws: np.ndarray
    J: np.ndarray
    certified_radius: float
    image_halfwidth: np.ndarray
    seed: int

    @property
    def dim(self) -> int:
        return self.center.size

    def evaluate(self, a) -> np.ndarray:
        return evaluate_chart(self, a)

    def invert(self, target, tol: float = 1e-9) -> ChartPoint:
        return invert_chart(self, target, tol)

    def to_json(self, target=None) -> Optional[str]:
        data = {
            "schema": 1,
            "metric": self.metric.describe(),
            "center": self.center.tolist(),
            "base_points": self.base_points.tolist(),
            "radii": self.radii.tolist(),
            "directions": self.directions.tolist(),
            "lams": self.lams.tolist(),
            "ws": self.ws.tolist(),
            "J": self.J.tolist(),
            "certified_radius": self.certified_radius,
            "image_halfwidth": self.image_halfwidth.tolist(),
            "seed": self.seed,
        }
        text = json.dumps(data, sort_keys=True, indent=2) + "\n"
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w") as fh:
                fh.write(text)
        return None

    @classmethod
    def from_json(cls, source) -> "DistanceChart":
        if hasattr(source, "read"):
            data = json.load(source)
        elif isinstance(source, dict):
            data = source
        elif isinstance(source, str) and source.lstrip().startswith("{"):
            data = json.loads(source)
        else:
            with open(source) as fh:
                data = json.load(fh)
        return cls(
            metric=make_metric(data["metric"]),
            center=np.asarray(data["center"], dtype=float),
            base_points=np.asarray(data["base_points"], dtype=float),
            radii=np.asarray(data["radii"], dtype=float),
            directions=np.asarray(data["directions"], dtype=float),
            lams=np.asarray(data["lams"], dtype=float),
            ws=np.asarray(data["ws"], dtype=float),
            J=np.asarray(data["J"], dtype=float),
            certified_radius=float(data["certified_radius"]),
            image_halfwidth=np.asarray(data["image_halfwidth"], dtype=float),
            seed=int(data["seed"]),
        )


def build_distance_chart(
    m: FinslerMetric, p, radius_budget: float, seed: int = 0
) -> DistanceChart:
    """Construct a distance chart at p with base points within the budget.

    Iterates k = 1..dim: v_k is the deterministic first vector of the
    sphere-tangent basis over the previous base points (F-normalized), and
    p_k the emanating point 0.25 * radius_budget backward along v_k
    (halving on failure).  Certifies triangularity of the derivative,
    invertibility, and a round-trip radius.
    """
    p = m.patch.require(as_coords(p, m.dim))
    if radius_budget <= 0.0:
        raise ChartConstructionError("radius budget must be positive", "input")
    cert = normal_radius(m, p, cap=radius_budget, seed=seed)
    if cert.radius < radius_budget - 1e-12:
        raise ChartConstructionError(
            f"radius budget {radius_budget} exceeds the normal-radius "
            f"estimate {cert.radius:.3g} at {p.tolist()}",
            "precondition",
        )
    n = m.dim
    base_points = []
    directions = []
    lams = []
    ws = []
    radii = []
    for k in range(n):
        try:
            basis = sphere_tangent_basis(m, p, base_points)
        except DegenerateConfigurationError as exc:
            raise ChartConstructionError(
                f"tangent basis failed before index {k}: {exc}", f"basis-{k}"
            ) from None
        if basis.shape[0] == 0:
            raise ChartConstructionError(
                f"no tangent direction left at index {k}", f"basis-{k}"
            )
        v = basis[0] / evaluate_F(m, p, basis[0])
        delta = 0.25 * radius_budget
        em = None
        last = None
        for _ in range(5):
            try:
                em = emanating_point(m, p, v, delta, seed=seed)
                break
            except (EmanatingError, NumericError, DomainError) as exc:
                last = exc
                delta *= 0.5
        if em is None:
            raise ChartConstructionError(
                f"emanating point failed at index {k}: {last}", f"emanating-{k}"
            )
        q = as_coords(em.q, n)
        try:
            rho = distance(m, q, p, tol=J_SHOOT_TOL)
        except InversionError as exc:
            raise ChartConstructionError(
                f"radius evaluation failed at index {k}: {exc}", f"radius-{k}"
            ) from None
        if abs(rho - em.delta) > 1e-4 * max(1.0, em.delta):
            raise ChartConstructionError(
                f"radius {rho:.6g} disagrees with construction length "
                f"{em.delta:.6g} at index {k}",
                f"radius-{k}",
            )
        base_points.append(q)
        directions.append(v)
        lams.append(1.0 / em.lam)
        ws.append(np.asarray(em.w, dtype=float))
        radii.append(rho)

    base_points = np.vstack(base_points)
    directions = np.vstack(directions)
    J = np.empty((n, n))
    for i in range(n):
        r = _distance_field(m, base_points[i])
        for j in range(n):
            J[i, j] = _dir_derivative(r, p, directions[j])
    norm_J = float(np.linalg.norm(J))
    off = _off_triangle(J)
    if off > TRIANGULAR_TOL * norm_J:
        raise ChartConstructionError(
            f"derivative not lower triangular: off-triangle mass {off:.3e} "
            f"vs {TRIANGULAR_TOL * norm_J:.3e}",
            "triangularity",
        )
    if np.any(np.diag(J) <= 0.0):
        raise ChartConstructionError("non-positive diagonal entry", "diagonal")
    if np.linalg.cond(J) > 1e8:
        raise ChartConstructionError("derivative numerically singular", "conditioning")

    chart = DistanceChart(
        metric=m,
        center=p,
        base_points=base_points,
        radii=np.asarray(radii),
        directions=directions,
        lams=np.asarray(lams),
        ws=np.vstack(ws),
        J=J,
        certified_radius=0.0,
        image_halfwidth=np.full(n, np.inf),
        seed=seed,
    )
    radius, halfwidth = _certify(chart, radius_budget)
    return dataclasses.replace(
        chart, certified_radius=radius, image_halfwidth=halfwidth
    )


def _dir_derivative(r, p: np.ndarray, v: np.ndarray) -> float:
    h0 = J_DIFF.fd_step * (1.0 + float(np.max(np.abs(p)))) / float(
        np.linalg.norm(v)
    )
    ests = []
    for k in range(J_DIFF.richardson_levels):
        h = h0 / 2.0**k
        ests.append((r(p + h * v) - r(p - h * v)) / (2.0 * h))
    acc = np.asarray(ests)
    for jj in range(1, len(ests)):
        fac = 4.0**jj
        acc = (fac * acc[1:] - acc[:-1]) / (fac - 1.0)
    return float(acc[0])


def _off_triangle(J: np.ndarray) -> float:
    n = J.shape[0]
    if n == 1:
        return 0.0
    return float(np.max(np.abs(J[np.triu_indices(n, k=1)])))


def _certify(chart: DistanceChart, budget: float):
    """Largest of budget/2, budget/4, ... passing the round-trip probe."""
    m = chart.metric
    p = chart.center
    rng = np.random.default_rng(chart.seed + 101)
    dirs = rng.standard_normal((10, m.dim))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    # probe both orientations: asymmetric norms push the theta excursion
    # much further along the backward-drift directions
    dirs = np.vstack([dirs, -dirs])
    fracs = np.linspace(0.35, 0.95, 2)
    # Strongly anisotropic norms (Randers drift near 1) shrink the
    # certifiable radius like the smallest F over the unit sphere: the
    # F-ball's coordinate reach must stay inside the fold locus of the
    # two-distance map.  The ladder therefore runs deep.
    for divisor in (2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0):
        radius = budget / divisor
        halfwidth = np.zeros(m.dim)
        ok = True
        for u in dirs:
            F = evaluate_F(m, p, u)
            for frac in fracs:
                try:
                    a, _ = flow(m, p, (radius * frac / F) * u, 1.0)
                    theta = evaluate_chart(chart, a)
                    trial = dataclasses.replace(
                        chart,
                        certified_radius=radius,
                        image_halfwidth=np.full(m.dim, np.inf),
                    )
                    back = invert_chart(trial, theta, tol=1e-10)
                except (
                    ChartEvaluationError,
                    OutsideCertifiedError,
                    DomainError,
                    NumericError,
                ):
                    ok = False
                    break
                if np.linalg.norm(np.asarray(back) - a) > ROUNDTRIP_TOL:
                    ok = False
                    break
                halfwidth = np.maximum(halfwidth, np.abs(theta - chart.radii))
            if not ok:
                break
        if ok:
            # Round trips are certified by the fan above; the admission box
            # needs a denser sweep because the theta excursion per F-length
            # peaks in narrow backward-drift cones that 20 directions can
            # miss.  Evaluation-only, so the extra directions are cheap.
            extra = rng.standard_normal((24, m.dim))
            extra /= np.linalg.norm(extra, axis=1)[:, None]
            for u in np.vstack([extra, -extra]):
                F = evaluate_F(m, p, u)
                for frac in fracs:
                    try:
                        a, _ = flow(m, p, (radius * frac / F) * u, 1.0)
                        theta = evaluate_chart(chart, a)
                    except (ChartEvaluationError, DomainError, NumericError):
                        continue
                    halfwidth = np.maximum(
                        halfwidth, np.abs(theta - chart.radii)
                    )
            return radius, halfwidth * 1.15 + 1e-12
    raise ChartConstructionError(
        "round-trip certification failed at every candidate radius",
        "certification",
    )


def evaluate_chart(chart: DistanceChart, a) -> np.ndarray:
    """theta(a) = (distance(p_1, a), ..., distance(p_n, a))."""
    a = as_coords(a, chart.dim)
    out = np.empty(chart.dim)
    for i in range(chart.dim):
        try:
            out[i] = distance(chart.metric, chart.base_points[i], a, tol=J_SHOOT_TOL)
        except (InversionError, DomainError) as exc:
            raise ChartEvaluationError(
                f"distance coordinate {i} unavailable at {a.tolist()}: {exc}",
                index=i,
            ) from None
    return out


def invert_chart(chart: DistanceChart, target, tol: float = 1e-9) -> ChartPoint:
    """Newton inverse of the chart map using the stored derivative.

    The target must lie in the certified image box around theta(center);
    divergence raises the same outside-certified error as a box violation.
    """
    target = as_coords(target, chart.dim)
    if np.any(np.abs(target - chart.radii) > chart.image_halfwidth):
        raise OutsideCertifiedError(
            f"target {target.tolist()} outside the certified image box "
            f"around {chart.radii.tolist()}"
        )
    V = chart.directions
    c = np.zeros(chart.dim)
    J = np.array(chart.J, dtype=float)

    def residual(cc):
        a = chart.center + V.T @ cc
        if not chart.metric.patch.contains(a):
            return a, None, np.inf
        theta = evaluate_chart(chart, a)
        R = theta - target
        return a, R, float(np.linalg.norm(R))

    def fd_jacobian(cc):
        out = np.empty((chart.dim, chart.dim))
        for j in range(chart.dim):
            h = 1e-6 * (1.0 + abs(cc[j]))
            cp = cc.copy()
            cm = cc.copy()
            cp[j] += h
            cm[j] -= h
            _, Rp, _ = residual(cp)
            _, Rm, _ = residual(cm)
            if Rp is None or Rm is None:
                raise OutsideCertifiedError("iterate left the patch")
            out[:, j] = (Rp - Rm) / (2.0 * h)
        return out

    a, R, rn = residual(c)
    if R is None:
        raise OutsideCertifiedError("iterate left the patch")
    # Distance pairs identify mirror-image points across the base-point
    # axis; an undamped first step can jump onto the wrong sheet and
    # converge there.  Monotone backtracking from c = 0 (which is on the
    # correct sheet) keeps the iteration local; Broyden updates and, on a
    # stall, a finite-difference refresh track the derivative away from
    # the center, where strong anisotropy bends it off the stored J.
    refreshes = 0
    for _ in range(80):
        if rn < tol:
            return ChartPoint(a)
        try:
            step = np.linalg.solve(J, R)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        for _ in range(8):
            c2 = c - lam * step
            a2, R2, rn2 = residual(c2)
            if R2 is not None and rn2 < rn:
                break
            lam *= 0.5
        else:
            if refreshes >= 3:
                break
            J = fd_jacobian(c)
            refreshes += 1
            continue
        dc_ = c2 - c
        dR = R2 - R
        denom = float(dc_ @ dc_)
        if denom > 0.0:
            J = J + np.outer(dR - J @ dc_, dc_) / denom
        c, a, R, rn = c2, a2, R2, rn2
    raise OutsideCertifiedError(
        f"chord Newton failed to converge for target {target.tolist()}"
    )
