"""Coordinate plumbing and the shared finite-difference backend."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerkit.errors import DegenerateInputError, DomainError, NumericError
from finslerkit.numcore import (
    ChartPoint,
    DiffConfig,
    PatchSpec,
    TangentVector,
    as_coords,
    directional_derivative,
    jacobian,
    null_space_basis,
)


def test_as_coords_accepts_wrappers_and_lists():
    p = ChartPoint([1.0, 2.0])
    v = TangentVector(p, [3.0, 4.0])
    assert np.array_equal(as_coords(p), [1.0, 2.0])
    assert np.array_equal(as_coords(v), [3.0, 4.0])
    assert as_coords([1, 2, 3]).dtype == np.float64


def test_as_coords_rejects_bad_shapes():
    with pytest.raises(DegenerateInputError):
        as_coords([[1.0, 2.0]])
    with pytest.raises(DegenerateInputError):
        as_coords([])
    with pytest.raises(DegenerateInputError):
        as_coords([1.0, 2.0], dim=3)


def test_chart_point_is_immutable_sequence():
    p = ChartPoint([0.5, -1.5])
    assert p.dim == 2 and len(p) == 2
    assert p[1] == -1.5
    assert list(p) == [0.5, -1.5]
    with pytest.raises(ValueError):
        p.coords[0] = 9.0


def test_tangent_vector_checks_base_dim():
    with pytest.raises(DegenerateInputError):
        TangentVector([0.0, 0.0], [1.0, 2.0, 3.0])


class TestPatchSpec:
    def test_halfplane_membership(self):
        patch = PatchSpec(2, bounds=((-np.inf, np.inf), (0.0, np.inf)))
        assert patch.contains([0.0, 1.0])
        assert not patch.contains([0.0, -1.0])
        assert not patch.contains([0.0, 0.0])  # open at the boundary
        assert patch.boundary_margin([3.0, 0.25]) == 0.25

    def test_constraint_disk(self):
        patch = PatchSpec(2, constraint=lambda x: 1.0 - np.linalg.norm(x))
        assert patch.contains([0.5, 0.5])
        assert not patch.contains([0.8, 0.8])

    def test_require_raises_domain_error(self):
        patch = PatchSpec(2, bounds=((-1.0, 1.0), (-1.0, 1.0)))
        with pytest.raises(DomainError):
            patch.require([2.0, 0.0])

    def test_sample_is_seeded_and_inside(self):
        patch = PatchSpec(2, bounds=((-np.inf, np.inf), (0.0, np.inf)))
        a = patch.sample(np.random.default_rng(7), 50)
        b = patch.sample(np.random.default_rng(7), 50)
        assert a.shape == (50, 2)
        assert np.array_equal(a, b)
        assert all(patch.contains(x) for x in a)

    def test_sample_rejects_impossible_constraint(self):
        patch = PatchSpec(1, constraint=lambda x: -1.0)
        with pytest.raises(DomainError):
            patch.sample(np.random.default_rng(0), 3)


def test_diff_config_validation():
    with pytest.raises(DegenerateInputError):
        DiffConfig(fd_step=0.0)
    with pytest.raises(DegenerateInputError):
        DiffConfig(fd_step=0.5)
    with pytest.raises(DegenerateInputError):
        DiffConfig(richardson_levels=0)


def test_directional_derivative_exact_on_polynomials():
    f = lambda x: x[0] ** 2 + 3.0 * x[0] * x[1]
    # grad f at (1, 2) is (8, 3); derivative along (1, 1) is 11
    got = directional_derivative(f, [1.0, 2.0], [1.0, 1.0])
    assert abs(got - 11.0) < 1e-9


def test_directional_derivative_transcendental():
    f = lambda x: float(np.cos(x[0]))
    got = directional_derivative(f, np.array([0.3]), np.array([1.0]))
    assert abs(got + np.sin(0.3)) < 1e-10


def test_directional_derivative_rejects_zero_direction():
    with pytest.raises(DegenerateInputError):
        directional_derivative(lambda x: x[0], [0.0], [0.0])


def test_directional_derivative_refuses_nan_fields():
    def partial_sqrt(x):
        with np.errstate(invalid="ignore"):
            return float(np.sqrt(x[0]))

    with pytest.raises(NumericError):
        directional_derivative(partial_sqrt, [0.0], [1.0])


@given(
    a=st.floats(-3.0, 3.0),
    b=st.floats(-3.0, 3.0),
)
@settings(max_examples=30, deadline=None)
def test_directional_derivative_linear_in_direction(a, b):
    # For a fixed smooth field the map v -> D_v f is linear.
    f = lambda x: np.sin(x[0]) * np.cos(x[1])
    p = [0.4, -0.2]
    v, w = np.array([1.0, 0.5]), np.array([-0.3, 1.0])
    combo = a * v + b * w
    if np.linalg.norm(combo) < 1e-3:
        return
    lhs = directional_derivative(f, p, combo)
    rhs = a * directional_derivative(f, p, v) + b * directional_derivative(f, p, w)
    assert abs(lhs - rhs) < 1e-8


def test_jacobian_matches_analytic():
    f = lambda x: np.array([x[0] * x[1], np.exp(x[0]), x[1] ** 3])
    p = np.array([0.2, 1.1])
    J = jacobian(f, p)
    expected = np.array(
        [[1.1, 0.2], [np.exp(0.2), 0.0], [0.0, 3 * 1.1**2]]
    )
    assert np.max(np.abs(J - expected)) < 1e-8


def test_jacobian_chain_rule_on_linear_maps():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    B = np.array([[0.5, 0.0], [1.0, -1.0]])
    comp = lambda x: A @ (B @ x)
    J = jacobian(comp, [0.3, 0.7])
    assert np.max(np.abs(J - A @ B)) < 1e-10


class TestNullSpaceBasis:
    def test_empty_rows_need_dim(self):
        with pytest.raises(DegenerateInputError):
            null_space_basis([], tol=1e-9)
        basis = null_space_basis([], tol=1e-9, dim=3)
        assert basis.shape == (3, 3)
        assert np.max(np.abs(basis @ basis.T - np.eye(3))) < 1e-12

    def test_single_row_plane(self):
        basis = null_space_basis([[1.0, 1.0, 0.0]], tol=1e-9)
        assert basis.shape == (2, 3)
        assert np.max(np.abs(basis @ np.array([1.0, 1.0, 0.0]))) < 1e-9
        assert np.max(np.abs(basis @ basis.T - np.eye(2))) < 1e-12

    def test_deterministic(self):
        rows = [[0.3, -1.2, 0.4], [0.0, 2.0, 1.0]]
        b1 = null_space_basis(rows, tol=1e-9)
        b2 = null_space_basis(rows, tol=1e-9)
        assert np.array_equal(b1, b2)

    def test_zero_row_rejected(self):
        with pytest.raises(DegenerateInputError):
            null_space_basis([[0.0, 0.0]], tol=1e-9)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_random_rows_annihilated(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 3))
        rows = rng.standard_normal((k, 4))
        rows /= np.linalg.norm(rows, axis=1)[:, None]
        basis = null_space_basis(rows, tol=1e-8)
        assert basis.shape[0] >= 4 - k
        if basis.size:
            assert np.max(np.abs(basis @ rows.T)) < 1e-8
            gram = basis @ basis.T
            assert np.max(np.abs(gram - np.eye(len(basis)))) < 1e-10
