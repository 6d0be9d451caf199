"""Geodesic integration, the exponential map, emanating points and the
normal-radius certificate.

The engine is a single adaptive Dormand-Prince 5(4) integrator with dense
output driving x'' = -2 G(x, x') through the canonical-spray kernel; there
are no per-family geodesic shortcuts here (closed forms appear only in the
tests).  Backward integration for non-reversible metrics integrates the
same ODE with negative time, never the reversed metric.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels as K
from .errors import (
    DegenerateInputError,
    DegenerateMetricError,
    DomainError,
    EmanatingError,
    ExpDomainError,
    NumericError,
    StiffnessError,
)
from .metrics import FinslerMetric, evaluate_F
from .numcore import ChartPoint, TangentVector, as_coords

#: integrate_geodesic default tolerance (rtol = atol)
DEFAULT_TOL = 1e-9
#: endpoint-accuracy tolerance used by the exponential map and shooting
EXP_TOL = 1e-11
MAX_STEPS = 50_000

_STATUS_NAMES = {
    K.OK: "ok",
    K.PATCH_EXIT: "patch-exit",
    K.STIFF: "stiff",
    K.MAX_STEPS: "max-steps",
}


@dataclass(frozen=True)
class GeodesicPath:
    """Dense geodesic solution on [t_lo, t_hi] with t_lo <= 0 <= t_hi.

    ``nodes_t``/``nodes_z`` are the accepted integrator nodes (z stacks x
    then v); the seg_* arrays hold the quartic dense-output interpolant per
    accepted step.  ``exited_backward``/``exited_forward`` flag truncation
    at a patch boundary.
    """

    metric: FinslerMetric
    p: np.ndarray
    v: np.ndarray
    t_lo: float
    t_hi: float
    nodes_t: np.ndarray
    nodes_z: np.ndarray
    seg_t0: np.ndarray
    seg_h: np.ndarray
    seg_z0: np.ndarray
    seg_q: np.ndarray
    stats: dict
    exited_backward: bool = False
    exited_forward: bool = False

    @property
    def dim(self) -> int:
        return self.p.size

    def _segment(self, t: float) -> int:
        if not self.t_lo <= t <= self.t_hi:
            raise DomainError(
                f"t={t} outside the integrated span "
                f"[{self.t_lo:.6g}, {self.t_hi:.6g}]"
            )
        left = self.seg_t0 + np.minimum(self.seg_h, 0.0)
        idx = int(np.searchsorted(left, t, side="right")) - 1
        return min(max(idx, 0), self.seg_t0.size - 1)

    def state(self, t: float) -> np.ndarray:
        """Full state (x, v) at time t from the dense interpolant."""
        if self.seg_t0.size == 0:
            if t != 0.0:
                raise DomainError("degenerate path only defined at t = 0")
            return self.nodes_z[0].copy()
        k = self._segment(float(t))
        theta = (t - self.seg_t0[k]) / self.seg_h[k]
        powers = np.array([theta, theta**2, theta**3, theta**4])
        return self.seg_z0[k] + self.seg_h[k] * (self.seg_q[k] @ powers)

    def position(self, t: float) -> np.ndarray:
        return self.state(t)[: self.dim]

    def velocity(self, t: float) -> np.ndarray:
        return self.state(t)[self.dim :]

    def __call__(self, t: float):
        z = self.state(t)
        return z[: self.dim], z[self.dim :]

    def speed_drift(self) -> float:
        """max |F(x(t), v(t)) - F(p, v)| / F(p, v) over nodes and midpoints."""
        F0 = evaluate_F(self.metric, self.p, self.v)
        ts = list(self.nodes_t)
        ts += list((self.nodes_t[:-1] + self.nodes_t[1:]) / 2.0)
        worst = 0.0
        for t in ts:
            z = self.state(float(t))
            F = float(
                K.finsler_F(
                    self.metric.code,
                    self.metric.params,
                    z[: self.dim],
                    z[self.dim :],
                )
            )
            worst = max(worst, abs(F - F0) / F0)
        return worst

    def sample(self, n: int):
        """n states on a uniform time grid over the reached span."""
        ts = np.linspace(self.t_lo, self.t_hi, n)
        zs = np.vstack([self.state(float(t)) for t in ts])
        return ts, zs

    def to_csv(self, target=None) -> Optional[str]:
        """Write nodes as CSV rows (t, x..., v...); returns text if target
        is None, else writes to the given path or file object."""
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(
            ["t"]
            + [f"x{i}" for i in range(self.dim)]
            + [f"v{i}" for i in range(self.dim)]
        )
        for t, z in zip(self.nodes_t, self.nodes_z):
            w.writerow([repr(float(t))] + [repr(float(c)) for c in z])
        text = buf.getvalue()
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w") as fh:
                fh.write(text)
        return None


def _run_leg(m: FinslerMetric, z0: np.ndarray, t_end: float, tol: float):
    return K.rk45_integrate(
        m.code, m.params, z0, t_end, tol, tol, MAX_STEPS, True
    )


def integrate_geodesic(
    m: FinslerMetric,
    p,
    v,
    t_span=(0.0, 1.0),
    tol: float = DEFAULT_TOL,
) -> GeodesicPath:
    """Geodesic through (p, v) on t_span = (t_lo, t_hi), t_lo <= 0 <= t_hi.

    A patch exit truncates the affected leg and sets the exit flag; a
    step-size collapse away from the boundary raises StiffnessError.
    """
    p = m.patch.require(as_coords(p, m.dim))
    v = as_coords(v, m.dim)
    if not np.any(v):
        raise DegenerateInputError("initial velocity must be nonzero")
    t_lo, t_hi = float(t_span[0]), float(t_span[1])
    if not t_lo <= 0.0 <= t_hi:
        raise DegenerateInputError("t_span must contain 0")
    z0 = np.concatenate([p, v])

    seg_t0, seg_h, seg_z0, seg_q = [], [], [], []
    nodes = [(0.0, z0.copy())]
    stats = {"n_accept": 0, "n_reject": 0, "tol": tol}
    exited = {"backward": False, "forward": False}
    reached = {"lo": 0.0, "hi": 0.0}

    for leg, t_end in (("backward", t_lo), ("forward", t_hi)):
        if t_end == 0.0:
            continue
        status, t_reached, _, nacc, nrej, ts, zs, hs, qs, nrec = _run_leg(
            m, z0, t_end, tol
        )
        stats["n_accept"] += int(nacc)
        stats["n_reject"] += int(nrej)
        if status == K.STIFF:
            raise StiffnessError(
                f"step size collapsed at t={t_reached:.6g} ({leg} leg)"
            )
        if status == K.MAX_STEPS:
            raise NumericError(f"step budget exhausted on the {leg} leg")
        if status == K.PATCH_EXIT:
            exited[leg] = True
        reached["lo" if leg == "backward" else "hi"] = float(t_reached)
        for k in range(nrec):
            seg_t0.append(float(ts[k]))
            seg_h.append(float(hs[k]))
            seg_z0.append(zs[k].copy())
            seg_q.append(qs[k].copy())
            nodes.append((float(ts[k + 1]), zs[k + 1].copy()))

    order = np.argsort([t for t, _ in nodes], kind="stable")
    nodes_t = np.array([nodes[i][0] for i in order])
    nodes_z = np.vstack([nodes[i][1] for i in order])
    if seg_t0:
        lefts = np.array(seg_t0) + np.minimum(np.array(seg_h), 0.0)
        seg_order = np.argsort(lefts, kind="stable")
    else:
        seg_order = np.zeros(0, dtype=int)
    path = GeodesicPath(
        metric=m,
        p=p,
        v=v,
        t_lo=reached["lo"],
        t_hi=reached["hi"],
        nodes_t=nodes_t,
        nodes_z=nodes_z,
        seg_t0=np.array(seg_t0)[seg_order] if seg_t0 else np.zeros(0),
        seg_h=np.array(seg_h)[seg_order] if seg_t0 else np.zeros(0),
        seg_z0=np.vstack([seg_z0[i] for i in seg_order])
        if seg_t0
        else np.zeros((0, 2 * m.dim)),
        seg_q=np.stack([seg_q[i] for i in seg_order])
        if seg_t0
        else np.zeros((0, 2 * m.dim, 4)),
        stats=stats,
        exited_backward=exited["backward"],
        exited_forward=exited["forward"],
    )
    return path


def flow(m: FinslerMetric, p, v, t: float, tol: float = EXP_TOL):
    """Endpoint-only geodesic flow: (x, v) at time t.  Raises on failure."""
    p = m.patch.require(as_coords(p, m.dim))
    v = as_coords(v, m.dim)
    status, t_reached, x, v_out = K.exp_final(
        m.code, m.params, p, v, float(t), tol, tol, MAX_STEPS
    )
    if status == K.PATCH_EXIT:
        raise ExpDomainError(
            f"geodesic left the patch at t={t_reached:.6g} (target {t:.6g})"
        )
    if status != K.OK:
        name = _STATUS_NAMES.get(int(status), "unknown")
        raise StiffnessError(f"geodesic flow failed ({name}) at t={t_reached:.6g}")
    return x, v_out


def exponential(m: FinslerMetric, p, v, tol: float = EXP_TOL) -> ChartPoint:
    """exp_p(v) = gamma_v(1); ExpDomainError if the patch is left first."""
    v = as_coords(v, m.dim)
    if not np.any(v):
        return ChartPoint(m.patch.require(as_coords(p, m.dim)))
    x, _ = flow(m, p, v, 1.0, tol)
    return ChartPoint(x)


def rescaling_defect(m: FinslerMetric, p, v, t: float, s: float) -> float:
    """|gamma_{t v}(s) - gamma_v(s t)| from two independent integrations."""
    if t <= 0.0:
        raise DegenerateInputError("rescaling factor t must be positive")
    p = as_coords(p, m.dim)
    v = as_coords(v, m.dim)
    a, _ = flow(m, p, t * v, s)
    b, _ = flow(m, p, v, s * t)
    return float(np.linalg.norm(a - b))


def exp_jacobian_at_zero(
    m: FinslerMetric, p, h0: float = 1e-2, levels: int = 3
) -> np.ndarray:
    """One-sided FD Jacobian of v -> exp_p(v) at v = 0.

    One-sided because F is only C^1-compatible at the zero section; the
    forward differences are Richardson-extrapolated along rays, where the
    flow is smooth by the rescaling law.
    """
    p = m.patch.require(as_coords(p, m.dim))
    n = p.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        ests = []
        for k in range(levels):
            h = h0 / 2.0**k
            x, _ = flow(m, p, h * e, 1.0)
            ests.append((x - p) / h)
        # forward differences have error O(h): Richardson with factor 2
        acc = np.vstack(ests)
        for jj in range(1, levels):
            fac = 2.0**jj
            acc = (fac * acc[1:] - acc[:-1]) / (fac - 1.0)
        J[:, j] = acc[0]
    return J


@dataclass(frozen=True)
class NormalRadiusEstimate:
    """Certified-by-probing radius around ``center``.

    Shooting inversion converged from the default initial guess for every
    fan target on the F-sphere of radius ``radius``.  A heuristic
    certificate produced by bisection, not a proof.
    """

    center: np.ndarray
    radius: float
    cap: float
    fan: np.ndarray
    probes: int
    method: str = "shooting-fan-bisection"


def _direction_fan(dim: int, seed: int, extra: int = 8) -> np.ndarray:
    fan = []
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        fan.append(e.copy())
        fan.append(-e)
    rng = np.random.default_rng(seed)
    extra_dirs = rng.standard_normal((extra, dim))
    extra_dirs /= np.linalg.norm(extra_dirs, axis=1)[:, None]
    return np.vstack(fan + [extra_dirs])


def _shoot_default(
    m: FinslerMetric,
    p: np.ndarray,
    q: np.ndarray,
    tol: float,
    int_tol: float = EXP_TOL,
):
    v0 = q - p
    return K.shoot(
        m.code, m.params, p, q, v0, tol, 25, int_tol, int_tol, MAX_STEPS
    )


def normal_radius(
    m: FinslerMetric, p, cap: float, seed: int = 0
) -> NormalRadiusEstimate:
    """Largest probed radius r <= cap with invertible exp_p on a target fan.

    The fan holds the 2*dim antipodal chart directions plus 8 seeded ones,
    pushed to the F-sphere of radius r; success means the shooting solver
    converges from its default initial guess for every target.  Bisection
    refines to 2 decimal digits.
    """
    if cap <= 0.0:
        raise DegenerateInputError("cap must be positive")
    p = m.patch.require(as_coords(p, m.dim))
    fan = _direction_fan(m.dim, seed)
    probes = 0

    def succeeds(r: float) -> bool:
        nonlocal probes
        for u in fan:
            F = evaluate_F(m, p, u)
            v = (r / F) * u
            probes += 1
            status, _, q, _ = K.exp_final(
                m.code, m.params, p, v, 1.0, 1e-10, 1e-10, MAX_STEPS
            )
            if status != K.OK:
                return False
            v_rec, _, _, s_status = _shoot_default(m, p, q, 1e-9, int_tol=1e-10)
            if s_status != K.SHOOT_OK:
                return False
            if np.linalg.norm(v_rec - v) > 1e-3 * (1.0 + np.linalg.norm(v)):
                return False
        return True

    if succeeds(cap):
        return NormalRadiusEstimate(p, float(cap), float(cap), fan, probes)
    hi = cap
    lo = 0.0
    r = cap
    for _ in range(10):
        r *= 0.5
        if succeeds(r):
            lo = r
            break
        hi = r
    if lo == 0.0:
        raise DegenerateMetricError(
            f"no invertible radius found down to {r:.3g} at {p.tolist()}"
        )
    while hi - lo > 1e-2:
        mid = 0.5 * (lo + hi)
        if succeeds(mid):
            lo = mid
        else:
            hi = mid
    return NormalRadiusEstimate(p, float(lo), float(cap), fan, probes)


@dataclass(frozen=True)
class EmanatingPoint:
    """Emanating point q of (p, v): the geodesic from q with initial
    velocity w re-passes p at t = delta/lam with velocity lam*v."""

    q: ChartPoint
    w: TangentVector
    lam: float
    delta: float
    roundtrip_position_error: float
    roundtrip_velocity_error: float


def emanating_point(
    m: FinslerMetric,
    p,
    v,
    delta: Optional[float] = None,
    seed: int = 0,
) -> EmanatingPoint:
    """Emanating point of the vector v at p, delta units backward.

    q = gamma_v(-delta), w = lam * gamma_v'(-delta) with
    lam = min(1, 0.9 r_q / (delta F(w_dir))) where r_q is a normal-radius
    estimate at q.  delta defaults to 0.1x the normal radius at p and is
    halved (at most 6 times) when the backward leg exits the patch.
    """
    p = m.patch.require(as_coords(p, m.dim))
    v = as_coords(v, m.dim)
    if not np.any(v):
        raise DegenerateInputError("v must be nonzero")
    if delta is None:
        delta = 0.1 * normal_radius(m, p, cap=2.0, seed=seed).radius
    delta = float(delta)
    if delta <= 0.0:
        raise DegenerateInputError("delta must be positive")

    last_exc: Optional[Exception] = None
    for _ in range(7):
        try:
            q, w_dir = flow(m, p, v, -delta)
        except ExpDomainError as exc:
            last_exc = exc
            delta *= 0.5
            continue
        F_w = evaluate_F(m, q, w_dir)
        cap = max(2.0 * delta * F_w, 0.25)
        try:
            r_q = normal_radius(m, q, cap=cap, seed=seed).radius
        except DegenerateMetricError as exc:
            last_exc = exc
            delta *= 0.5
            continue
        lam = min(1.0, 0.9 * r_q / (delta * F_w))
        w = lam * w_dir
        # verify: the geodesic from (q, w) re-passes p at t = delta/lam
        try:
            x_back, v_back = flow(m, q, w, delta / lam)
        except (ExpDomainError, StiffnessError) as exc:
            last_exc = exc
            delta *= 0.5
            continue
        pos_err = float(np.linalg.norm(x_back - p))
        vel_err = float(
            np.linalg.norm(v_back - lam * v) / max(np.linalg.norm(lam * v), 1e-300)
        )
        if pos_err > 1e-6 or vel_err > 1e-5:
            raise NumericError(
                "emanating-point round trip failed: position error "
                f"{pos_err:.3e}, velocity error {vel_err:.3e}"
            )
        return EmanatingPoint(
            ChartPoint(q), TangentVector(q, w), float(lam), delta, pos_err, vel_err
        )
    raise EmanatingError(
        f"no emanating point after repeated delta halving: {last_exc}"
    )
