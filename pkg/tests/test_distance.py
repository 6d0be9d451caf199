"""Distances by shooting, curve lengths, and distance-only norm recovery."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerkit.distance import (
    QuasiMetricOracle,
    arc_length,
    busemann_mayer_F,
    distance,
    invert_exp,
    load_oracle_table,
    oracle_table,
    quasimetric_audit,
    sphere_sample,
)
from finslerkit.errors import DegenerateInputError, InversionError, NumericError
from finslerkit.geodesics import exponential
from finslerkit.metrics import (
    round_sphere_patch,
    euclidean,
    evaluate_F,
    hyperbolic_half_plane,
    randers,
    riemannian_bump,
)


def hyp_distance(p, q):
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    return float(
        np.arccosh(1.0 + float((p - q) @ (p - q)) / (2.0 * p[1] * q[1]))
    )


def test_euclidean_distance_is_chord():
    m = euclidean(2)
    assert distance(m, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0, abs=1e-9)


def test_hyperbolic_closed_form():
    m = hyperbolic_half_plane(2)
    pairs = [
        ([0.0, 1.0], [0.0, np.e]),       # vertical: distance exactly 1
        ([0.0, 1.0], [1.0, 1.0]),
        ([-0.5, 0.7], [0.8, 2.1]),
    ]
    for p, q in pairs:
        assert distance(m, p, q) == pytest.approx(hyp_distance(p, q), abs=1e-9)


def test_randers_flat_asymmetry_frozen():
    m = randers(2, beta=(0.5, 0.0), kappa=0.0)
    # straight segments: rho(p, q) = |q - p| + b . (q - p)
    assert distance(m, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.5, abs=1e-9)
    assert distance(m, [1.0, 0.0], [0.0, 0.0]) == pytest.approx(0.5, abs=1e-9)
    gap = distance(m, [0.0, 0.0], [1.0, 0.0]) - distance(m, [1.0, 0.0], [0.0, 0.0])
    assert gap == pytest.approx(2.0 * 0.5, abs=1e-9)


def test_distance_at_coincidence_is_zero():
    assert distance(riemannian_bump(2), [0.3, 0.1], [0.3, 0.1]) == 0.0


def test_invert_exp_recovers_velocity():
    m = hyperbolic_half_plane(2)
    p = [0.0, 1.0]
    v = np.array([0.4, 0.3])
    q = exponential(m, p, v)
    res = invert_exp(m, p, q)
    assert np.max(np.abs(res.v.components - v)) < 1e-8
    assert res.residual < 1e-8
    assert res.iterations <= 25
    # distance equals the F-norm of the recovered velocity
    assert distance(m, p, q) == pytest.approx(evaluate_F(m, p, v), abs=1e-9)


def test_invert_exp_horizontal_frozen():
    # between (0, 1) and (1, 1): d = arccosh(1.5)
    m = hyperbolic_half_plane(2)
    res = invert_exp(m, [0.0, 1.0], [1.0, 1.0])
    assert evaluate_F(m, [0.0, 1.0], res.v) == pytest.approx(
        np.arccosh(1.5), abs=1e-10
    )


def test_invert_exp_refuses_near_antipodal_target():
    # conjugate-point ill-conditioning on the sphere: shooting must refuse,
    # not return a garbage vector
    m = round_sphere_patch(2)
    p = np.array([1.4, 1.4])
    q = -p / float(p @ p) + np.array([0.004, 0.0])
    with pytest.raises(InversionError):
        invert_exp(m, p, q)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_triangle_inequality_euclidean(seed):
    rng = np.random.default_rng(seed)
    m = euclidean(2)
    a, b, c = m.patch.sample(rng, 3)
    assert distance(m, a, c) <= distance(m, a, b) + distance(m, b, c) + 1e-8


class TestArcLength:
    def test_straight_segment(self):
        m = euclidean(2)
        pts = np.array([[0.0, 0.0], [0.6, 0.8]])
        assert arc_length(m, pts, kind="linear") == pytest.approx(1.0, abs=1e-12)

    def test_circle_circumference(self):
        # 65 samples of a periodic cubic resolve 2 pi to the 1e-6 level
        m = euclidean(2)
        t = np.linspace(0.0, 2.0 * np.pi, 65)
        pts = np.column_stack([np.cos(t), np.sin(t)])
        L = arc_length(m, pts, params=t, kind="cubic", closed=True)
        assert L == pytest.approx(2.0 * np.pi, abs=1e-6)

    def test_polyline_upper_bounds_distance(self, rng):
        m = riemannian_bump(2)
        p, q = m.patch.sample(rng, 2)
        ts = np.linspace(0.0, 1.0, 5)[:, None]
        nodes = p[None, :] * (1 - ts) + q[None, :] * ts
        nodes[1:-1] += 0.05 * rng.standard_normal((3, 2))
        L = arc_length(m, nodes, kind="linear")
        assert L >= distance(m, p, q) - 1e-9

    def test_rejects_bad_inputs(self):
        m = euclidean(2)
        with pytest.raises(DegenerateInputError):
            arc_length(m, np.zeros((1, 2)))
        with pytest.raises(DegenerateInputError):
            arc_length(m, np.zeros((3, 2)))  # repeated samples
        with pytest.raises(DegenerateInputError):
            arc_length(m, np.array([[0.0, 0.0], [1.0, 0.0]]), kind="bezier")


class TestBusemannMayer:
    def test_flat_recovery_is_sharp(self):
        m = randers(2, beta=(0.5, 0.0), kappa=0.0)
        rho = lambda p, q: distance(m, p, q)
        for v in ([1.0, 0.0], [-1.0, 0.0], [0.3, -0.9]):
            v = np.asarray(v)
            rec = busemann_mayer_F(rho, lambda t: t * v)
            assert rec == pytest.approx(
                evaluate_F(m, [0.0, 0.0], v), abs=1e-8
            )

    def test_curved_recovery(self):
        m = hyperbolic_half_plane(2)
        rho = lambda p, q: distance(m, p, q)
        p = np.array([0.2, 1.3])
        v = np.array([0.8, -0.6])
        rec = busemann_mayer_F(rho, lambda t: p + t * v)
        F = evaluate_F(m, p, v)
        assert abs(rec - F) / F < 1e-3

    def test_curve_need_not_be_a_ray(self):
        # only alpha(0) and alpha'(0) matter
        m = euclidean(2)
        rho = lambda p, q: distance(m, p, q)
        alpha = lambda t: np.array([t, t * t])
        assert busemann_mayer_F(rho, alpha) == pytest.approx(1.0, abs=1e-6)

    def test_bad_levels(self):
        with pytest.raises(DegenerateInputError):
            busemann_mayer_F(lambda p, q: 0.0, lambda t: np.array([t, 0.0]), levels=0)


def test_sphere_sample_radii(rng):
    m = hyperbolic_half_plane(2)
    p = [0.0, 1.0]
    samples = sphere_sample(m, p, 0.7, 40, seed=3)
    assert len(samples) + samples.dropped == 40
    for q in samples:
        assert distance(m, p, q) == pytest.approx(0.7, abs=1e-7)


def test_sphere_sample_deterministic():
    m = euclidean(2)
    a = sphere_sample(m, [0.0, 0.0], 1.0, 10, seed=9)
    b = sphere_sample(m, [0.0, 0.0], 1.0, 10, seed=9)
    assert all(
        np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b)
    )


class TestOracles:
    def test_metric_oracle_audit_passes(self):
        m = randers(2, beta=(0.5, 0.0), kappa=0.0)
        rho = QuasiMetricOracle.from_metric(m)
        assert not rho.symmetric
        report = quasimetric_audit(rho, m.patch, n_pairs=15, n_triples=10, seed=2)
        assert report.passed, report.summary()

    def test_identity_violation_is_caught(self):
        m = euclidean(2)
        base = QuasiMetricOracle.from_metric(m)
        shifted = QuasiMetricOracle(
            lambda p, q: base(p, q) + 0.1, symmetric=True, provenance="shifted"
        )
        report = quasimetric_audit(shifted, m.patch, n_pairs=10, n_triples=5, seed=0)
        assert not report.check("identity").passed

    def test_symmetry_claim_is_checked(self):
        m = randers(2, beta=(0.5, 0.0), kappa=0.0)
        lying = QuasiMetricOracle(
            lambda p, q: distance(m, p, q), symmetric=True, provenance="lying"
        )
        report = quasimetric_audit(lying, m.patch, n_pairs=10, n_triples=5, seed=0)
        assert not report.check("symmetry").passed

    def test_table_roundtrip(self, rng):
        m = euclidean(2)
        rho = QuasiMetricOracle.from_metric(m)
        pts = m.patch.sample(rng, 6)
        pairs = [(pts[i], pts[j]) for i in range(3) for j in range(3, 6)]
        text = oracle_table(rho, pairs)
        loaded = load_oracle_table(io.StringIO(text), dim=2, symmetric=True)
        for p, q in pairs:
            assert loaded(p, q) == rho(p, q)
            assert loaded(q, p) == rho(p, q)  # symmetric table lookup

    def test_table_file_roundtrip(self, rng, tmp_path):
        m = randers(2, beta=(0.5, 0.0), kappa=0.0)
        rho = QuasiMetricOracle.from_metric(m)
        pts = m.patch.sample(rng, 4)
        pairs = [(pts[0], pts[1]), (pts[2], pts[3])]
        target = tmp_path / "table.csv"
        assert oracle_table(rho, pairs, target=str(target)) is None
        loaded = load_oracle_table(str(target), dim=2, symmetric=False)
        assert loaded(pts[0], pts[1]) == rho(pts[0], pts[1])
        with pytest.raises(NumericError):
            loaded(pts[1], pts[0])  # asymmetric table has no reverse entry
