"""Scenario runner: property suites and experiments behind JSON configs.

A scenario names a metric, an operation (suite or experiment), parameters,
and a mandatory seed; execution is deterministic and the emitted JSON
report is byte-identical across reruns except for the wall-time field.
Suites mirror the library's verification criteria; experiments emit plot
data (CSV) and single-shot records.
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import maps as maps_mod
from .distance import arc_length, busemann_mayer_F, distance
from .distchart import build_distance_chart, _off_triangle
from .errors import (
    ConfigError,
    FinslerError,
    NotASubmetryError,
    NotDistancePreservingError,
    NotReversibleError,
)
from .geodesics import (
    exp_jacobian_at_zero,
    exponential,
    flow,
    integrate_geodesic,
    normal_radius,
    rescaling_defect,
)
from .maps import (
    BUILTIN_ISOMETRIES,
    BUILTIN_NON_ISOMETRIES,
    SubmetryProbe,
    builtin_probe,
    isometry_defect,
    isometry_verdict,
    myers_steenrod_reconstruct,
    submetry_ball_image,
    submetry_differential,
)
from .metrics import (
    FinslerMetric,
    evaluate_F,
    euclidean,
    family_names,
    hyperbolic_half_plane,
    make_metric,
    randers,
)
from .numcore import DiffConfig, as_coords, jacobian
from .spray import canonical_spray, canonical_spray_residuals

SCHEMA_VERSION = 1

#: per-family chart radius budgets that the seeded sample boxes support
CHART_BUDGETS = {
    "euclidean": 1.0,
    "minkowski-norm": 1.0,
    "riemannian": 0.8,
    "randers": 0.8,
    "hyperbolic-half-plane": 0.4,
    "round-sphere-patch": 0.2,
}


# --------------------------------------------------------------------------
# report plumbing


@dataclass(frozen=True)
class CheckResult:
    """One named numeric check.

    ``direction`` is "below" (value must stay under the threshold) or
    "above" (value must exceed it, e.g. corruption detectors).  Boolean
    verdicts are encoded as 0/1 against a 0.5 threshold.
    """

    name: str
    value: float
    threshold: float
    passed: bool
    direction: str = "below"
    detail: str = ""


def check_below(name, value, threshold, detail="") -> CheckResult:
    return CheckResult(name, float(value), float(threshold),
                       bool(value < threshold), "below", detail)


def check_above(name, value, threshold, detail="") -> CheckResult:
    return CheckResult(name, float(value), float(threshold),
                       bool(value > threshold), "above", detail)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class RunReport:
    scenario: dict
    checks: list
    wall_time: float
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "schema": SCHEMA_VERSION,
                "scenario": self.scenario,
                "checks": [
                    {
                        "name": c.name,
                        "value": c.value,
                        "threshold": c.threshold,
                        "passed": c.passed,
                        "direction": c.direction,
                        "detail": c.detail,
                    }
                    for c in self.checks
                ],
                "passed": self.passed,
                "wall_time": self.wall_time,
                "artifacts": list(self.artifacts),
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def canonical_bytes(self) -> bytes:
        """Report bytes with the wall-time field removed; the unit of the
        byte-identical reproducibility contract."""
        d = self.to_dict()
        d.pop("wall_time")
        return (json.dumps(d, sort_keys=True, indent=2) + "\n").encode("utf-8")

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            rel = "<" if c.direction == "below" else ">"
            lines.append(
                f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: "
                f"{c.value:.6g} {rel} {c.threshold:.6g}"
            )
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    metric: dict
    operation: str
    seed: int
    params: dict = field(default_factory=dict)
    tol_scale: float = 1.0
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a JSON object")
        if data.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {data.get('schema')!r}")
        if "seed" not in data:
            raise ConfigError("scenario config requires an explicit seed")
        try:
            seed = int(data["seed"])
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {data['seed']!r}")
        metric = data.get("metric")
        if not isinstance(metric, dict) or "family" not in metric:
            raise ConfigError("scenario config requires a metric descriptor")
        if metric["family"] not in family_names():
            raise ConfigError(f"unknown metric family {metric['family']!r}")
        op = data.get("operation")
        if op not in OPERATIONS and op not in SUITES:
            raise ConfigError(f"unknown operation {op!r}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        tol_scale = float(data.get("tolerances", {}).get("tol_scale", 1.0))
        if tol_scale <= 0.0:
            raise ConfigError("tol_scale must be positive")
        return cls(
            metric=dict(metric),
            operation=op,
            seed=seed,
            params=dict(params),
            tol_scale=tol_scale,
            out=data.get("out"),
        )

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
        return cls.from_dict(data)


# --------------------------------------------------------------------------
# suites


def spray_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    n = int(params.get("n", 100))
    rng = np.random.default_rng(seed)
    pts = m.patch.sample(rng, n)
    worst_rap = 0.0
    worst_sf = 0.0
    for k in range(n):
        y = rng.standard_normal(m.dim)
        y /= np.linalg.norm(y)
        rec = canonical_spray_residuals(m, pts[k], y)
        worst_rap = max(worst_rap, float(np.max(np.abs(rec.rapcsak))) / rec.F_value)
        worst_sf = max(worst_sf, abs(rec.sf) / rec.F_value)
    base = canonical_spray(m)

    def corrupt(x, y):
        return base(x, y) + 0.05 * float(y @ y) * np.ones(m.dim)

    detect = 0.0
    for k in range(min(n, 10)):
        y = np.zeros(m.dim)
        y[k % m.dim] = 1.0
        rec = canonical_spray_residuals(m, pts[k], y, spray=corrupt)
        detect = max(detect, rec.max_abs)
    return [
        check_below("rapcsak-normalized-max", worst_rap, 1e-6 * tol),
        check_below("sf-normalized-max", worst_sf, 1e-6 * tol),
        check_above("corrupted-spray-residual", detect, 1e-2,
                    "deliberate corruption must be visible"),
    ], {}


def geodesic_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    n = int(params.get("n", 20))
    rng = np.random.default_rng(seed)
    pts = m.patch.sample(rng, n)
    worst_drift = 0.0
    for k in range(n):
        u = rng.standard_normal(m.dim)
        u /= evaluate_F(m, pts[k], u)
        path = integrate_geodesic(m, pts[k], 0.3 * u, t_span=(-1.0, 1.0))
        worst_drift = max(worst_drift, path.speed_drift())
    worst_resc = 0.0
    for _ in range(int(params.get("n_rescale", 50))):
        k = rng.integers(0, n)
        u = rng.standard_normal(m.dim)
        u /= evaluate_F(m, pts[k], u)
        t = 0.5 + 1.5 * rng.random()
        s = 0.1 + 0.4 * rng.random()
        worst_resc = max(
            worst_resc, rescaling_defect(m, pts[k], 0.2 * u, float(t), float(s))
        )
    worst_jac = 0.0
    for k in range(min(n, 5)):
        J = exp_jacobian_at_zero(m, pts[k])
        worst_jac = max(worst_jac, float(np.max(np.abs(J - np.eye(m.dim)))))
    return [
        check_below("speed-drift-max", worst_drift, 1e-6 * tol),
        check_below("rescaling-defect-max", worst_resc, 1e-7 * tol),
        check_below("exp-jacobian-identity-gap", worst_jac, 1e-4 * tol),
    ], {}


def distance_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    rng = np.random.default_rng(seed)
    n = int(params.get("n", 30))
    pts = m.patch.sample(rng, n)
    worst_exp = 0.0
    for k in range(n):
        u = rng.standard_normal(m.dim)
        Fu = evaluate_F(m, pts[k], u)
        t = 0.1 + 0.4 * rng.random()
        q = exponential(m, pts[k], (t / Fu) * u)
        worst_exp = max(worst_exp, abs(distance(m, pts[k], q) - t))

    mh = hyperbolic_half_plane(2)
    worst_hyp = 0.0
    hp = mh.patch.sample(rng, n)
    hq = mh.patch.sample(rng, n)
    for k in range(n):
        p, q = hp[k], hq[k]
        closed = np.arccosh(
            1.0 + float((p - q) @ (p - q)) / (2.0 * p[1] * q[1])
        )
        worst_hyp = max(worst_hyp, abs(distance(mh, p, q) - closed))

    mr = randers(2, beta=(0.5, 0.0))
    b = np.array([0.5, 0.0])
    worst_asym = 0.0
    rp = mr.patch.sample(rng, n)
    rq = mr.patch.sample(rng, n)
    for k in range(n):
        gap = distance(mr, rp[k], rq[k]) - distance(mr, rq[k], rp[k])
        worst_asym = max(worst_asym, abs(gap - 2.0 * float(b @ (rq[k] - rp[k]))))

    n_poly = int(params.get("n_polylines", 200))
    min_slack = np.inf
    produced = 0
    attempts = 0
    while produced < n_poly and attempts < 20 * n_poly:
        attempts += 1
        # draw the far end by flowing a bounded F-length: unconstrained
        # pairs can exceed the shooting solver's contract (near-conjugate
        # sphere pairs), and distance() rightly refuses those
        p = m.patch.sample(rng, 1)[0]
        u = rng.standard_normal(m.dim)
        u /= evaluate_F(m, p, u)
        t = 0.3 + 0.9 * rng.random()
        try:
            q = exponential(m, p, t * u)
        except FinslerError:
            continue
        for _ in range(50):
            ts = np.linspace(0.0, 1.0, 5)[:, None]
            nodes = p[None, :] * (1 - ts) + q[None, :] * ts
            nodes[1:-1] += 0.1 * np.linalg.norm(q - p) * rng.standard_normal(
                (3, m.dim)
            )
            if all(m.patch.contains(x) for x in nodes):
                break
        else:
            continue
        L = arc_length(m, nodes, kind="linear")
        min_slack = min(min_slack, L - distance(m, p, q))
        produced += 1
    return [
        check_below("exp-distance-gap", worst_exp, 1e-6 * tol),
        check_below("hyperbolic-closed-form-gap", worst_hyp, 1e-6 * tol),
        check_below("randers-asymmetry-gap", worst_asym, 1e-7 * tol),
        check_above("polyline-infimum-slack", min_slack, -1e-4 * tol,
                    "no polyline may undercut the geodesic distance"),
    ], {}


def busemann_mayer_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    n = int(params.get("n", 20))
    rng = np.random.default_rng(seed)
    pts = m.patch.sample(rng, n)
    rho = lambda a, b: distance(m, a, b)
    worst = 0.0
    for k in range(n):
        v = rng.standard_normal(m.dim)
        v /= np.linalg.norm(v)
        p = pts[k]
        Fv = evaluate_F(m, p, v)
        rec = busemann_mayer_F(rho, lambda t: p + t * v)
        worst = max(worst, abs(rec - Fv) / Fv)
    return [check_below("busemann-mayer-rel-err", worst, 1e-3 * tol)], {}


def distance_chart_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    n_centers = int(params.get("n_centers", 3))
    budget = float(params.get("radius_budget", CHART_BUDGETS.get(m.family, 0.5)))
    rng = np.random.default_rng(seed)
    centers = m.patch.sample(rng, n_centers)
    failures = 0
    worst_off = 0.0
    worst_diag = 0.0
    worst_round = 0.0
    for k in range(n_centers):
        try:
            ch = build_distance_chart(m, centers[k], budget, seed=seed + k)
        except FinslerError:
            failures += 1
            continue
        worst_off = max(
            worst_off, _off_triangle(ch.J) / float(np.linalg.norm(ch.J))
        )
        for i in range(m.dim):
            pred = ch.lams[i] * evaluate_F(m, ch.base_points[i], ch.ws[i])
            worst_diag = max(worst_diag, abs(ch.J[i, i] - pred) / abs(pred))
        for _ in range(3):
            u = rng.standard_normal(m.dim)
            u /= evaluate_F(m, centers[k], u)
            a, _ = flow(m, centers[k], 0.6 * ch.certified_radius * u, 1.0)
            back = ch.invert(ch.evaluate(a))
            worst_round = max(
                worst_round, float(np.linalg.norm(np.asarray(back) - a))
            )
    return [
        check_below("construction-failures", failures, 0.5,
                    f"{n_centers} centers, budget {budget}"),
        check_below("off-triangle-rel-max", worst_off, 1e-6 * tol),
        check_below("diagonal-identity-rel-max", worst_diag, 1e-4 * tol),
        check_below("roundtrip-max", worst_round, 1e-7 * tol),
    ], {}


def isometry_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    worst_iso = 0.0
    worst_spray = 0.0
    worst_geo = 0.0
    worst_dist = 0.0
    rng = np.random.default_rng(seed)
    for name in BUILTIN_ISOMETRIES:
        probe = builtin_probe(name)
        v = isometry_verdict(probe, seed=seed)
        worst_iso = max(worst_iso, v.isometry_defect)
        worst_spray = max(worst_spray, v.spray_defect)
        worst_geo = max(worst_geo, v.geodesic_defect)
        pts = probe.source.patch.sample(rng, 5)
        for i in range(4):
            d_src = distance(probe.source, pts[i], pts[i + 1])
            d_tgt = distance(probe.target, probe(pts[i]), probe(pts[i + 1]))
            worst_dist = max(worst_dist, abs(d_src - d_tgt))
    min_reject = np.inf
    for name in BUILTIN_NON_ISOMETRIES:
        d = isometry_defect(builtin_probe(name), seed=seed)
        min_reject = min(min_reject, d)
    derived = isometry_defect(builtin_probe("randers-rotation"), seed=seed)
    return [
        check_below("isometry-defect-max", worst_iso, 1e-6 * tol),
        check_below("spray-defect-max", worst_spray, 1e-4 * tol),
        check_below("geodesic-defect-max", worst_geo, 1e-6 * tol),
        check_below("distance-preservation-gap", worst_dist, 1e-7 * tol),
        check_above("non-isometry-defect-min", min_reject, 1e-3,
                    "every non-isometry must be visibly rejected"),
        check_below(
            "randers-rotation-derived-gap",
            abs(derived - 0.7071067811865476),
            1e-3 * tol,
        ),
    ], {}


def myers_steenrod_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    cases = [
        ("euclid-rotation", [0.0, 0.0], 1.0,
         np.array([[0.0, -1.0], [1.0, 0.0]])),
        ("randers-translation", [0.1, -0.2], 0.8, np.eye(2)),
        ("hyperbolic-translation", [0.0, 1.0], 0.4, np.eye(2)),
    ]
    worst_deriv = 0.0
    worst_defect = 0.0
    worst_routes = 0.0
    for name, p, radius, expected in cases:
        probe = builtin_probe(name, with_derivative=False, with_preimage=False)
        rec = myers_steenrod_reconstruct(probe, p, radius, seed=seed)
        worst_deriv = max(worst_deriv, float(np.max(np.abs(rec.derivative - expected))))
        worst_defect = max(worst_defect, rec.f_defect_direct, rec.f_defect_busemann)
        worst_routes = max(
            worst_routes, abs(rec.f_defect_direct - rec.f_defect_busemann)
        )
    scaling = builtin_probe("euclid-scaling", with_derivative=False,
                            with_preimage=False)
    witness = 0.0
    try:
        myers_steenrod_reconstruct(scaling, [0.0, 0.0], 1.0, seed=seed)
    except NotDistancePreservingError as exc:
        witness = abs(exc.witness[3] - exc.witness[2])
    return [
        check_below("derivative-recovery-gap", worst_deriv, 1e-3 * tol),
        check_below("f-preservation-defect", worst_defect, 1e-3 * tol),
        check_below("route-agreement-gap", worst_routes, 1e-3 * tol),
        check_above("scaling-audit-witness-gap", witness, 1e-2,
                    "scaling must fail the distance audit with a witness"),
    ], {}


def submetry_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    n_ball = int(params.get("n_samples", 4000))
    me = euclidean(2)
    sp_e = SubmetryProbe(lambda x: float(np.linalg.norm(x)), me, delta=0.5,
                         label="euclid-r-origin")
    rec_e = submetry_ball_image(sp_e, [1.0, 0.0], 0.25, n_samples=n_ball,
                                seed=seed)
    mh = hyperbolic_half_plane(2)
    base = np.array([0.0, 1.0])
    sp_h = SubmetryProbe(lambda x: distance(mh, base, x), mh, delta=0.5,
                         label="hyperbolic-r-base")
    rec_h = submetry_ball_image(sp_h, [0.0, float(np.e)], 0.2,
                                n_samples=max(n_ball // 2, 500), seed=seed)

    def margins(rec):
        contain = min(rec.lo - (rec.r_center - rec.eps),
                      (rec.r_center + rec.eps) - rec.hi)
        cover = min(rec.r_center - rec.eps + rec.coverage_tol - rec.lo,
                    rec.hi - (rec.r_center + rec.eps - rec.coverage_tol))
        return contain, cover

    ce, ve = margins(rec_e)
    ch_, vh = margins(rec_h)

    d_e = submetry_differential(sp_e, [3.0, 4.0], 0.1, seed=seed)
    d_h = submetry_differential(sp_h, [0.0, float(np.e)], 0.1, seed=seed)
    direct_e = jacobian(lambda u: np.array([sp_e.r(u)]), np.array([3.0, 4.0]),
                        DiffConfig(1e-3, 2))[0]
    direct_h = jacobian(lambda u: np.array([sp_h.r(u)]),
                        np.array([0.0, float(np.e)]), DiffConfig(1e-3, 2))[0]
    gap_direct = max(
        float(np.max(np.abs(d_e.gradient - direct_e))),
        float(np.max(np.abs(d_h.gradient - direct_h))),
    )

    refused = 0.0
    mr = randers(2, beta=(0.5, 0.0))
    try:
        submetry_ball_image(
            SubmetryProbe(lambda x: float(np.linalg.norm(x)), mr, delta=0.5),
            [0.0, 0.0], 0.2, n_samples=100, seed=seed,
        )
    except NotReversibleError:
        refused = 1.0
    return [
        check_above("ball-containment-margin", min(ce, ch_), 0.0),
        check_above("ball-coverage-margin", min(ve, vh), 0.0),
        check_below("sandwich-agreement-residual",
                    max(d_e.residual, d_h.residual), 1e-3 * tol),
        check_below("gradient-vs-direct-gap", gap_direct, 1e-3 * tol),
        check_above("non-reversible-refused", refused, 0.5),
    ], {}


def reproducibility_suite(m: FinslerMetric, seed: int, tol: float, params: dict):
    inner = dict(
        metric=m.describe(), operation="geodesic-suite",
        seed=seed, params={"n": 5, "n_rescale": 10},
    )
    r1 = run_scenario({"schema": SCHEMA_VERSION, **inner,
                       "tolerances": {"tol_scale": tol}})
    r2 = run_scenario({"schema": SCHEMA_VERSION, **inner,
                       "tolerances": {"tol_scale": tol}})
    identical = r1.canonical_bytes() == r2.canonical_bytes()
    return [
        check_above("reports-byte-identical", 1.0 if identical else 0.0, 0.5,
                    "same config and seed, wall time excluded"),
    ], {}


# --------------------------------------------------------------------------
# experiments


def distance_asymmetry_experiment(m: FinslerMetric, seed: int, tol: float,
                                  params: dict):
    if m.family != "randers":
        m = randers(2, beta=(0.5, 0.0))
    kappa = m.params[0]
    if kappa != 0.0:
        raise ConfigError("asymmetry experiment needs the flat randers drift")
    b = np.asarray(m.params[1:1 + m.dim])
    n = int(params.get("n", 40))
    rng = np.random.default_rng(seed)
    P = m.patch.sample(rng, n)
    Q = m.patch.sample(rng, n)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow([f"p{i}" for i in range(m.dim)] + [f"q{i}" for i in range(m.dim)]
               + ["rho_pq", "rho_qp"])
    worst = 0.0
    for k in range(n):
        d1 = distance(m, P[k], Q[k])
        d2 = distance(m, Q[k], P[k])
        worst = max(worst, abs((d1 - d2) - 2.0 * float(b @ (Q[k] - P[k]))))
        w.writerow([repr(float(x)) for x in P[k]]
                   + [repr(float(x)) for x in Q[k]]
                   + [repr(d1), repr(d2)])
    checks = [check_below("asymmetry-identity-gap", worst, 1e-7 * tol)]
    return checks, {"asymmetry.csv": buf.getvalue()}


def myers_steenrod_experiment(m: FinslerMetric, seed: int, tol: float,
                              params: dict):
    name = params.get("probe", "hyperbolic-translation")
    probe = builtin_probe(name, with_derivative=False, with_preimage=False)
    p = params.get("p", [0.0, 1.0] if "hyperbolic" in name else [0.0, 0.0])
    radius = float(params.get("radius", 0.4 if "hyperbolic" in name else 1.0))
    rec = myers_steenrod_reconstruct(probe, p, radius, seed=seed)
    payload = json.dumps(
        _jsonable(
            {
                "probe": name,
                "p": list(map(float, p)),
                "derivative": rec.derivative,
                "f_defect_direct": rec.f_defect_direct,
                "f_defect_busemann": rec.f_defect_busemann,
                "smoothness_residual": rec.smoothness_residual,
                "base_preimages": rec.base_preimages,
            }
        ),
        sort_keys=True, indent=2,
    ) + "\n"
    checks = [
        check_below("f-preservation-defect",
                    max(rec.f_defect_direct, rec.f_defect_busemann), 1e-3 * tol),
        check_below("smoothness-residual", rec.smoothness_residual, 1e-6 * tol),
    ]
    return checks, {"derivative.json": payload}


def normal_radius_experiment(m: FinslerMetric, seed: int, tol: float,
                             params: dict):
    p = params.get("p")
    rng = np.random.default_rng(seed)
    p = m.patch.sample(rng, 1)[0] if p is None else as_coords(p, m.dim)
    cap = float(params.get("cap", 2.0))
    est = normal_radius(m, p, cap=cap, seed=seed)
    payload = json.dumps(
        _jsonable({"p": p, "cap": cap, "radius": est.radius,
                   "probes": est.probes}),
        sort_keys=True, indent=2,
    ) + "\n"
    return [check_above("normal-radius", est.radius, 0.0)], {
        "normal_radius.json": payload
    }


def submetry_ball_experiment(m: FinslerMetric, seed: int, tol: float,
                             params: dict):
    rng = np.random.default_rng(seed)
    base = as_coords(params.get("base", m.patch.sample(rng, 1)[0]), m.dim)
    q = as_coords(params.get("q", m.patch.sample(rng, 1)[0]), m.dim)
    eps = float(params.get("eps", 0.2))
    sp = SubmetryProbe(lambda x: distance(m, base, x), m, delta=max(eps, 0.5))
    rec = submetry_ball_image(sp, q, eps,
                              n_samples=int(params.get("n_samples", 2000)),
                              seed=seed)
    payload = json.dumps(
        _jsonable({"base": base, "q": q, "eps": eps, "lo": rec.lo,
                   "hi": rec.hi, "r_center": rec.r_center,
                   "containment": rec.containment, "coverage": rec.coverage}),
        sort_keys=True, indent=2,
    ) + "\n"
    contain = min(rec.lo - (rec.r_center - eps), (rec.r_center + eps) - rec.hi)
    cover = min(rec.r_center - eps + rec.coverage_tol - rec.lo,
                rec.hi - (rec.r_center + eps - rec.coverage_tol))
    return [
        check_above("containment-margin", contain, 0.0),
        check_above("coverage-margin", cover, 0.0),
    ], {"ball_image.json": payload}


def submetry_differential_experiment(m: FinslerMetric, seed: int, tol: float,
                                     params: dict):
    rng = np.random.default_rng(seed)
    base = as_coords(params.get("base", m.patch.sample(rng, 1)[0]), m.dim)
    q = as_coords(params.get("q", m.patch.sample(rng, 1)[0]), m.dim)
    delta = float(params.get("delta", 0.1))
    sp = SubmetryProbe(lambda x: distance(m, base, x), m, delta=max(delta, 0.5))
    rec = submetry_differential(sp, q, delta, seed=seed)
    payload = json.dumps(
        _jsonable({"base": base, "q": q, "delta": delta,
                   "gradient": rec.gradient, "residual": rec.residual,
                   "a": rec.a, "b": rec.b}),
        sort_keys=True, indent=2,
    ) + "\n"
    return [
        check_below("sandwich-agreement-residual", rec.residual, 1e-3 * tol)
    ], {"differential.json": payload}


# --------------------------------------------------------------------------
# registry and execution

SUITES = {
    "spray-suite": (spray_suite, "Rapcsak and SF residual characterization",
                    {"n": 100}),
    "geodesic-suite": (geodesic_suite,
                       "speed conservation, rescaling, exp derivative",
                       {"n": 20, "n_rescale": 50}),
    "distance-suite": (distance_suite,
                       "exp consistency, closed forms, polyline infimum",
                       {"n": 30, "n_polylines": 200}),
    "busemann-mayer-suite": (busemann_mayer_suite,
                             "norm recovery from distances", {"n": 20}),
    "distance-chart-suite": (distance_chart_suite,
                             "chart construction, triangularity, round trip",
                             {"n_centers": 3}),
    "isometry-suite": (isometry_suite,
                       "builtin isometries pass, non-isometries rejected", {}),
    "myers-steenrod-suite": (myers_steenrod_suite,
                             "point-map derivative recovery", {}),
    "submetry-suite": (submetry_suite,
                       "ball images, sandwich differentials, refusal",
                       {"n_samples": 4000}),
    "reproducibility-suite": (reproducibility_suite,
                              "byte-identical reports modulo wall time", {}),
}

OPERATIONS = {
    "distance-asymmetry": (distance_asymmetry_experiment,
                           "CSV of asymmetric distance pairs on flat randers",
                           {"n": 40}),
    "myers-steenrod": (myers_steenrod_experiment,
                       "single-probe reconstruction with derivative file",
                       {"probe": "hyperbolic-translation"}),
    "normal-radius": (normal_radius_experiment,
                      "certified normal radius at a point", {"cap": 2.0}),
    "submetry-ball-image": (submetry_ball_experiment,
                            "interval image of a metric ball under r",
                            {"eps": 0.2, "n_samples": 2000}),
    "submetry-differential": (submetry_differential_experiment,
                              "sandwich differential of a distance submetry",
                              {"delta": 0.1}),
}


def list_catalog(filter_text: Optional[str] = None) -> dict:
    """Deterministic registry of families, operations, and suites."""

    def keep(name):
        return filter_text is None or filter_text in name

    return {
        "families": sorted(f for f in family_names() if keep(f)),
        "operations": {
            name: {"description": desc, "params": dict(schema)}
            for name, (fn, desc, schema) in sorted(OPERATIONS.items())
            if keep(name)
        },
        "suites": {
            name: {"description": desc, "params": dict(schema)}
            for name, (fn, desc, schema) in sorted(SUITES.items())
            if keep(name)
        },
    }


def run_scenario(
    config,
    out_dir: Optional[str] = None,
    seed: Optional[int] = None,
    tol_scale: Optional[float] = None,
) -> RunReport:
    """Execute a scenario (path, dict, or ScenarioConfig) and write outputs.

    CLI overrides (seed, tol_scale, out_dir) take precedence over the
    config body.  Numerical failures are folded into a failing check
    rather than raised; config problems raise ConfigError.
    """
    if isinstance(config, ScenarioConfig):
        cfg = config
    elif isinstance(config, dict):
        cfg = ScenarioConfig.from_dict(config)
    else:
        cfg = ScenarioConfig.from_file(config)
    if seed is not None:
        cfg.seed = int(seed)
    if tol_scale is not None:
        cfg.tol_scale = float(tol_scale)
    if out_dir is not None:
        cfg.out = str(out_dir)
    try:
        m = make_metric(cfg.metric)
    except FinslerError as exc:
        raise ConfigError(f"bad metric descriptor: {exc}")
    entry = SUITES.get(cfg.operation) or OPERATIONS.get(cfg.operation)
    fn = entry[0]
    scenario_echo = {
        "metric": cfg.metric,
        "operation": cfg.operation,
        "params": cfg.params,
        "seed": cfg.seed,
        "tol_scale": cfg.tol_scale,
    }
    t0 = time.perf_counter()
    artifacts = {}
    try:
        checks, artifacts = fn(m, cfg.seed, cfg.tol_scale, cfg.params)
    except ConfigError:
        raise
    except FinslerError as exc:
        checks = [
            CheckResult("execution", float("nan"), 0.0, False, "below",
                        f"{type(exc).__name__}: {exc}")
        ]
    wall = time.perf_counter() - t0
    report = RunReport(scenario_echo, checks, wall, sorted(artifacts))
    if cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in artifacts.items():
            (out / name).write_text(text)
        (out / "report.json").write_text(report.to_json())
    return report
