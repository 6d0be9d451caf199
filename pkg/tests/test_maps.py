"""Isometry diagnostics, derivative-free reconstruction, scalar submetries."""

import numpy as np
import pytest

from finslerkit.distance import distance
from finslerkit.errors import (
    DegenerateInputError,
    DomainError,
    NonsmoothMapError,
    NotAnIsometrySeedError,
    NotASubmetryError,
    NotDistancePreservingError,
    NotReversibleError,
)
from finslerkit.geodesics import integrate_geodesic
from finslerkit.maps import (
    BUILTIN_ISOMETRIES,
    BUILTIN_NON_ISOMETRIES,
    MapProbe,
    SubmetryProbe,
    builtin_probe,
    geodesic_image_defect,
    isometry_defect,
    isometry_verdict,
    myers_steenrod_reconstruct,
    propagate_from_derivative,
    sandwich_values,
    spray_pushforward_defect,
    submetry_ball_image,
    submetry_differential,
    table_probe,
)
from finslerkit.metrics import (
    euclidean,
    evaluate_F,
    hyperbolic_half_plane,
    randers,
)


# ------------------------------------------------------------------
# norm defect


@pytest.mark.parametrize("name", BUILTIN_ISOMETRIES)
def test_isometries_have_tiny_norm_defect(name):
    assert isometry_defect(builtin_probe(name)) < 1e-6


def test_randers_rotation_defect_frozen():
    # rotating flat Randers by 90 degrees misaligns the drift; the defect
    # over chart-unit directions is |b| * sqrt(2) / 2 + ... = 0.7071...
    d = isometry_defect(builtin_probe("randers-rotation"))
    assert d == pytest.approx(0.7071067811865476, abs=1e-9)


def test_scaling_defect_frozen():
    # F(2v) - F(v) at unit v: defect exactly 1 on the flat plane
    d = isometry_defect(builtin_probe("euclid-scaling"))
    assert d == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", BUILTIN_NON_ISOMETRIES)
def test_non_isometries_are_visible(name):
    assert isometry_defect(builtin_probe(name)) > 1e-3


# ------------------------------------------------------------------
# spray defect


def test_spray_defect_isometries():
    for name in ("euclid-rotation", "hyperbolic-translation"):
        assert spray_pushforward_defect(builtin_probe(name)) < 1e-7, name


def test_shear_is_spray_invisible():
    # affine maps of a flat space are totally geodesic: the push-forward
    # residual is identically zero even though shear is no isometry.
    # Rejection is carried by the norm defect.
    shear = builtin_probe("euclid-shear")
    assert spray_pushforward_defect(shear) == 0.0
    assert isometry_defect(shear) > 0.5


def test_bend_is_spray_visible():
    # quadratic bend: second derivative term 2 * amp * y_1^2 = 0.6
    d = spray_pushforward_defect(builtin_probe("euclid-bend"))
    assert d == pytest.approx(0.6, abs=1e-9)


# ------------------------------------------------------------------
# geodesic image defect


def test_geodesic_images_follow_isometries():
    probe = builtin_probe("hyperbolic-translation")
    gamma = integrate_geodesic(
        probe.source, [0.0, 1.0], [0.0, 1.0], t_span=(-0.5, 0.5)
    )
    rec = geodesic_image_defect(probe, gamma)
    assert rec.value < 1e-7
    assert not rec.truncated


def test_scaling_maps_geodesics_to_geodesics():
    # necessary, not sufficient: scaling passes this test and must be
    # caught by the norm defect instead
    probe = builtin_probe("euclid-scaling")
    gamma = integrate_geodesic(
        probe.source, [0.1, 0.2], [0.3, -0.1], t_span=(-1.0, 1.0)
    )
    rec = geodesic_image_defect(probe, gamma)
    assert rec.value < 1e-8
    assert isometry_defect(probe) > 0.5


# ------------------------------------------------------------------
# verdicts


@pytest.mark.parametrize("name", BUILTIN_ISOMETRIES)
def test_verdict_accepts_isometries(name):
    v = isometry_verdict(builtin_probe(name))
    assert v.verdict, (name, v)
    assert v.grade == "exact"


@pytest.mark.parametrize("name", BUILTIN_NON_ISOMETRIES)
def test_verdict_rejects_non_isometries(name):
    assert not isometry_verdict(builtin_probe(name)).verdict


def test_fd_grade_verdict():
    # stripping the exact derivative demotes the grade, not the verdict
    probe = builtin_probe("euclid-rotation", with_derivative=False)
    v = isometry_verdict(probe)
    assert v.grade == "fd" and v.verdict
    assert v.threshold == 1e-3


# ------------------------------------------------------------------
# FD smoothness certificate


def test_kink_is_refused_when_straddled():
    m = euclidean(2)
    kink = MapProbe(
        lambda x: np.array([abs(x[0] - 0.123), x[1]]), m, m, label="kink"
    )
    # stencil spans the kink: central differences cannot stabilize
    with pytest.raises(NonsmoothMapError):
        kink.jacobian_at([0.123 + 2e-5, 0.0])
    # far from the kink the map is locally linear and passes
    J = kink.jacobian_at([0.9, 0.0])
    assert np.max(np.abs(J - np.diag([1.0, 1.0]))) < 1e-8


def test_fd_jacobian_matches_exact():
    probe = builtin_probe("euclid-rotation", with_derivative=False)
    exact = builtin_probe("euclid-rotation")
    x = np.array([0.3, -0.4])
    assert np.max(np.abs(probe.jacobian_at(x) - exact.jacobian_at(x))) < 1e-9


# ------------------------------------------------------------------
# derivative determinacy


def test_propagation_reproduces_hyperbolic_translation():
    probe = builtin_probe("hyperbolic-translation", offset=1.0)
    m = probe.source
    p = np.array([0.0, 1.0])
    rng = np.random.default_rng(8)
    targets = m.patch.sample(rng, 20)
    images = propagate_from_derivative(
        m, p, probe(p), np.eye(2), targets
    )
    worst = max(
        float(np.max(np.abs(np.asarray(img) - probe(t))))
        for img, t in zip(images, targets)
    )
    assert worst < 1e-8


def test_propagation_is_deterministic():
    m = euclidean(2)
    A = builtin_probe("euclid-rotation").jacobian_at([0.0, 0.0])
    targets = m.patch.sample(np.random.default_rng(3), 10)
    a = propagate_from_derivative(m, [0.0, 0.0], [0.0, 0.0], A, targets)
    b = propagate_from_derivative(m, [0.0, 0.0], [0.0, 0.0], A, targets)
    assert all(
        np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b)
    )


def test_propagation_requires_norm_preserving_seed():
    m = euclidean(2)
    with pytest.raises(NotAnIsometrySeedError):
        propagate_from_derivative(
            m, [0.0, 0.0], [0.0, 0.0], 2.0 * np.eye(2), [[0.5, 0.5]]
        )


# ------------------------------------------------------------------
# reconstruction from a point map


def test_reconstruct_rotation_derivative():
    probe = builtin_probe(
        "euclid-rotation", with_derivative=False, with_preimage=False
    )
    rec = myers_steenrod_reconstruct(probe, [0.0, 0.0], 1.0, seed=0)
    R90 = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.max(np.abs(rec.derivative - R90)) < 1e-6
    assert rec.f_defect_direct < 1e-6
    assert rec.f_defect_busemann < 1e-3
    assert rec.audit_worst < 1e-8
    assert rec.smoothness_residual < 1e-6


def test_reconstruct_uses_provided_preimage_consistently():
    with_pre = builtin_probe("euclid-rotation", with_derivative=False)
    rec = myers_steenrod_reconstruct(with_pre, [0.0, 0.0], 1.0, seed=0)
    assert np.max(np.abs(rec.derivative - [[0.0, -1.0], [1.0, 0.0]])) < 1e-6


def test_scaling_fails_audit_with_witness():
    probe = builtin_probe(
        "euclid-scaling", with_derivative=False, with_preimage=False
    )
    with pytest.raises(NotDistancePreservingError) as err:
        myers_steenrod_reconstruct(probe, [0.0, 0.0], 1.0, seed=0)
    p, q, rho_s, rho_t = err.value.witness
    # doubling map: target distance is twice the source distance
    assert rho_t == pytest.approx(2.0 * rho_s, rel=1e-6)
    assert rho_s > 0.01


# ------------------------------------------------------------------
# submetries


def unit_r(x):
    return float(np.linalg.norm(x))


@pytest.fixture(scope="module")
def euclid_submetry():
    return SubmetryProbe(unit_r, euclidean(2), delta=0.5, label="radius")


def test_ball_image_interval_frozen(euclid_submetry):
    rec = submetry_ball_image(euclid_submetry, [1.0, 0.0], 0.25, seed=0)
    # deterministic boundary fan at 0.999 eps pins both caps
    assert rec.lo == pytest.approx(1.0 - 0.999 * 0.25, abs=1e-7)
    assert rec.hi == pytest.approx(1.0 + 0.999 * 0.25, abs=1e-7)
    assert rec.containment and rec.coverage
    assert rec.coverage_tol == pytest.approx(0.02, abs=1e-12)


def test_ball_image_hyperbolic(euclid_submetry):
    m = hyperbolic_half_plane(2)
    base = np.array([0.0, 1.0])
    sp = SubmetryProbe(lambda x: distance(m, base, x), m, delta=0.5)
    rec = submetry_ball_image(sp, [0.0, float(np.e)], 0.2, n_samples=1500, seed=1)
    assert rec.containment and rec.coverage
    assert rec.lo == pytest.approx(0.8, abs=5e-3)
    assert rec.hi == pytest.approx(1.2, abs=5e-3)


def test_parabola_fails_coverage(euclid_submetry):
    # r(x) = x_0^2 has vanishing differential on the fiber through 0;
    # near a critical point the image interval falls short
    sp = SubmetryProbe(lambda x: x[0] ** 2, euclidean(2), delta=0.5)
    rec = submetry_ball_image(sp, [0.0, 0.0], 0.3, seed=0)
    assert not rec.coverage


def test_non_reversible_is_refused(euclid_submetry):
    sp = SubmetryProbe(unit_r, randers(2, beta=(0.5, 0.0)), delta=0.5)
    with pytest.raises(NotReversibleError):
        submetry_ball_image(sp, [1.0, 0.0], 0.2, seed=0)
    with pytest.raises(NotReversibleError):
        submetry_differential(sp, [1.0, 0.0], 0.1, seed=0)


def test_eps_beyond_probe_scale_is_refused(euclid_submetry):
    with pytest.raises(DomainError):
        submetry_ball_image(euclid_submetry, [1.0, 0.0], 0.75, seed=0)


def test_differential_euclid_frozen(euclid_submetry):
    rec = submetry_differential(euclid_submetry, [3.0, 4.0], 0.1, seed=0)
    assert np.max(np.abs(rec.gradient - [0.6, 0.8])) < 1e-5
    assert rec.residual < 1e-4
    # the two fiber points straddle the sphere radially
    assert unit_r(rec.a) == pytest.approx(5.0 - 0.1, abs=1e-6)
    assert unit_r(rec.b) == pytest.approx(5.0 + 0.1, abs=1e-6)


def test_differential_hyperbolic_vertical(euclid_submetry):
    m = hyperbolic_half_plane(2)
    base = np.array([0.0, 1.0])
    sp = SubmetryProbe(lambda x: distance(m, base, x), m, delta=0.5)
    rec = submetry_differential(sp, [0.0, float(np.e)], 0.1, seed=0)
    # r along the vertical is log(x_2): gradient (0, 1/e)
    assert np.max(np.abs(rec.gradient - [0.0, 1.0 / np.e])) < 1e-4


def test_sandwich_ordering(euclid_submetry):
    rec = submetry_differential(euclid_submetry, [3.0, 4.0], 0.1, seed=0)
    rng = np.random.default_rng(4)
    for _ in range(10):
        u = np.array([3.0, 4.0]) + 0.05 * rng.standard_normal(2)
        f_a, r_u, f_b = sandwich_values(euclid_submetry, rec, u)
        assert f_a + 1e-9 >= r_u >= f_b - 1e-9
    f_a, r_q, f_b = sandwich_values(euclid_submetry, rec, [3.0, 4.0])
    assert f_a == pytest.approx(r_q, abs=1e-6)
    assert f_b == pytest.approx(r_q, abs=1e-6)


def test_submetry_rejects_flat_function(euclid_submetry):
    # constant r has no fiber at r(q) + delta: not a submetry
    sp = SubmetryProbe(lambda x: 1.0, euclidean(2), delta=0.5)
    with pytest.raises(NotASubmetryError):
        submetry_differential(sp, [0.0, 0.0], 0.1, seed=0)


# ------------------------------------------------------------------
# serialization and table probes


def test_builtin_probe_json_roundtrip():
    probe = builtin_probe("randers-translation")
    clone = MapProbe.from_json(probe.to_json())
    x = np.array([0.2, 0.3])
    assert np.array_equal(clone(x), probe(x))
    assert np.array_equal(clone.jacobian_at(x), probe.jacobian_at(x))


def test_custom_probe_has_no_spec():
    m = euclidean(2)
    probe = MapProbe(lambda x: x, m, m)
    with pytest.raises(DegenerateInputError):
        probe.to_json()


def test_table_probe_interpolation_grade():
    # grid-interpolated rotation: accuracy is capped by the grid, so the
    # defect is visibly nonzero yet inside the fd-grade tolerance
    A = np.array([[0.0, -1.0], [1.0, 0.0]])
    axes = [np.linspace(-2.2, 2.2, 45), np.linspace(-2.2, 2.2, 45)]
    X, Y = np.meshgrid(*axes, indexing="ij")
    values = np.stack([A[0, 0] * X + A[0, 1] * Y, A[1, 0] * X + A[1, 1] * Y], axis=-1)
    m = euclidean(2)
    probe = table_probe(axes, values, m, m)
    assert probe.grade == "fd"
    d = isometry_defect(probe)
    assert d < 1e-3
    clone = MapProbe.from_json(probe.to_json())
    x = np.array([0.31, -0.7])
    assert np.max(np.abs(clone(x) - probe(x))) < 1e-12
