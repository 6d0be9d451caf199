"""Distance coordinates: construction, triangular structure, inversion."""

import numpy as np
import pytest

from finslerkit.distchart import (
    DistanceChart,
    build_distance_chart,
    evaluate_chart,
    invert_chart,
    sphere_tangent_basis,
)
from finslerkit.distance import distance
from finslerkit.errors import (
    ChartConstructionError,
    ChartEvaluationError,
    OutsideCertifiedError,
)
from finslerkit.geodesics import flow
from finslerkit.metrics import (
    euclidean,
    evaluate_F,
    hyperbolic_half_plane,
    randers,
    round_sphere_patch,
)


@pytest.fixture(scope="module")
def euclid_chart():
    return build_distance_chart(euclidean(2), [0.0, 0.0], 4.0, seed=0)


@pytest.fixture(scope="module")
def hyp_chart():
    return build_distance_chart(
        hyperbolic_half_plane(2), [0.0, 1.0], 0.4, seed=0
    )


class TestEuclidReference:
    """Flat charts have a closed form; every piece is checkable by hand."""

    def test_base_points(self, euclid_chart):
        # delta = budget / 4 along the two constructed directions
        expected = np.array([[-1.0, 0.0], [0.0, -1.0]])
        assert np.max(np.abs(euclid_chart.base_points - expected)) < 1e-9

    def test_radii(self, euclid_chart):
        assert np.max(np.abs(euclid_chart.radii - 1.0)) < 1e-9

    def test_jacobian_is_identity(self, euclid_chart):
        assert np.max(np.abs(euclid_chart.J - np.eye(2))) < 1e-7

    def test_evaluate_at_center(self, euclid_chart):
        theta = euclid_chart.evaluate([0.0, 0.0])
        assert np.max(np.abs(theta - [1.0, 1.0])) < 1e-9

    def test_evaluate_off_center(self, euclid_chart):
        theta = euclid_chart.evaluate([0.1, 0.0])
        # r to (-1,0) is 1.1; r to (0,-1) is sqrt(1.01)
        assert abs(theta[0] - 1.1) < 1e-9
        assert abs(theta[1] - np.sqrt(1.01)) < 1e-9

    def test_invert_roundtrip(self, euclid_chart):
        x = np.array([0.07, -0.04])
        back = invert_chart(euclid_chart, euclid_chart.evaluate(x))
        assert np.max(np.abs(np.asarray(back) - x)) < 1e-8


class TestStructure:
    @pytest.mark.parametrize(
        "m,center,budget",
        [
            (randers(2, beta=(0.5, 0.0), kappa=0.3), [0.2, -0.3], 0.8),
            (hyperbolic_half_plane(2), [0.0, 1.0], 0.4),
            (round_sphere_patch(2), [0.3, 0.2], 0.2),
        ],
        ids=["randers", "hyperbolic", "sphere"],
    )
    def test_triangular_with_positive_diagonal(self, m, center, budget):
        ch = build_distance_chart(m, center, budget, seed=1)
        J = ch.J
        n = J.shape[0]
        off = max(
            (abs(J[i, j]) for i in range(n) for j in range(i + 1, n)),
            default=0.0,
        )
        assert off < 1e-6 * np.linalg.norm(J)
        for i in range(n):
            pred = ch.lams[i] * evaluate_F(m, ch.base_points[i], ch.ws[i])
            assert J[i, i] > 0.0
            assert abs(J[i, i] - pred) < 1e-4 * abs(pred)

    def test_components_are_distances_to_base_points(self, hyp_chart):
        m = hyp_chart.metric
        x = np.array([0.05, 1.02])
        theta = hyp_chart.evaluate(x)
        for i in range(2):
            assert theta[i] == pytest.approx(
                distance(m, hyp_chart.base_points[i], x), abs=1e-8
            )

    def test_certified_radius_positive_and_bounded(self, hyp_chart):
        assert 0.0 < hyp_chart.certified_radius <= 0.4 / 2.0

    def test_roundtrip_inside_certified(self, hyp_chart):
        m = hyp_chart.metric
        rng = np.random.default_rng(5)
        for _ in range(5):
            u = rng.standard_normal(2)
            u /= evaluate_F(m, hyp_chart.center, u)
            x, _ = flow(m, hyp_chart.center, 0.6 * hyp_chart.certified_radius * u, 1.0)
            back = invert_chart(hyp_chart, hyp_chart.evaluate(x))
            assert np.max(np.abs(np.asarray(back) - x)) < 1e-7

    def test_hundred_point_roundtrip_at_half_radius(self, hyp_chart):
        m = hyp_chart.metric
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            u = rng.standard_normal(2)
            u /= evaluate_F(m, hyp_chart.center, u)
            t = 0.5 * hyp_chart.certified_radius * rng.random()
            x, _ = flow(m, hyp_chart.center, t * u, 1.0)
            back = invert_chart(hyp_chart, hyp_chart.evaluate(x))
            worst = max(worst, float(np.max(np.abs(np.asarray(back) - x))))
        assert worst < 1e-7

    def test_strong_drift_center_certifies_small(self):
        # F_min ~ 1 - |b| shrinks the coordinate reach the fold allows;
        # construction must still succeed, with an honestly tiny radius
        m = randers(2, beta=(0.5, 0.0), kappa=0.3)
        ch = build_distance_chart(m, [0.427, 0.918], 0.8, seed=3)
        assert 0.0 < ch.certified_radius <= 0.8 / 16.0
        x, _ = flow(m, ch.center, 0.5 * ch.certified_radius * np.array([-1.0, 0.0]), 1.0)
        back = invert_chart(ch, ch.evaluate(x))
        assert np.max(np.abs(np.asarray(back) - x)) < 1e-7

    def test_deterministic_under_seed(self):
        m = hyperbolic_half_plane(2)
        a = build_distance_chart(m, [0.0, 1.0], 0.4, seed=7)
        b = build_distance_chart(m, [0.0, 1.0], 0.4, seed=7)
        assert np.array_equal(a.J, b.J)
        assert np.array_equal(a.base_points, b.base_points)
        assert a.certified_radius == b.certified_radius


def test_sphere_tangent_basis_annihilates_gradients():
    m = euclidean(2)
    basis = sphere_tangent_basis(m, [0.0, 0.0], np.array([[-1.0, 0.0]]))
    assert basis.shape == (1, 2)
    # tangent to the sphere around (-1, 0) through the origin: +-e_2
    assert abs(abs(basis[0, 1]) - 1.0) < 1e-7
    assert abs(basis[0, 0]) < 1e-7


def test_invert_refuses_outside_certified_box(euclid_chart):
    far = euclid_chart.radii + 10.0 * euclid_chart.image_halfwidth
    with pytest.raises(OutsideCertifiedError):
        invert_chart(euclid_chart, far)


def test_evaluate_names_failing_component(hyp_chart):
    # a query outside the patch cannot be a distance-chart argument
    with pytest.raises(ChartEvaluationError) as err:
        evaluate_chart(hyp_chart, [0.0, -1.0])
    assert err.value.index in (0, 1)


def test_precondition_failure_is_staged():
    # budget far beyond the sphere chart's certified normal radius
    m = round_sphere_patch(2)
    with pytest.raises(ChartConstructionError) as err:
        build_distance_chart(m, [0.0, 0.0], 3.5, seed=0)
    assert err.value.stage == "precondition"


class TestSerialization:
    def test_json_roundtrip(self, hyp_chart):
        text = hyp_chart.to_json()
        clone = DistanceChart.from_json(text)
        assert np.array_equal(clone.J, hyp_chart.J)
        assert clone.certified_radius == hyp_chart.certified_radius
        x = [0.03, 0.98]
        assert np.array_equal(clone.evaluate(x), hyp_chart.evaluate(x))

    def test_json_to_file(self, euclid_chart, tmp_path):
        path = tmp_path / "chart.json"
        euclid_chart.to_json(target=str(path))
        clone = DistanceChart.from_json(path.read_text())
        assert np.array_equal(clone.base_points, euclid_chart.base_points)
