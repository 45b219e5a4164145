"""Tests for grids, flux-form operators and the PCG solvers."""

import pytest
import numpy as np

from homomag.core.cellsolve import solve_periodic_divform
from homomag.core.errors import CompatibilityViolated, GridError
from homomag.core.grid import (DivFormOperator, Grid, centered_gradient, face_difference,
                               face_divergence)
from homomag.core.solvers import solve_shifted


class TestGrid:
    """Test grid geometry."""

    def test_centers_and_shape(self):
        """Cell centres sit at (k + 1/2) h."""
        grid = Grid(2, 8)
        assert grid.shape == (8, 8)
        assert grid.h == pytest.approx(0.125)
        np.testing.assert_allclose(grid.centers(), (np.arange(8) + 0.5) / 8)
        assert grid.points().shape == (8, 8, 2)

    def test_face_counts(self):
        """Periodic grids carry N faces per line, Neumann grids N - 1."""
        assert Grid(1, 16, periodic=True).n_faces == 16
        assert Grid(1, 16).n_faces == 15

    def test_invalid_dimension(self):
        """Only n in {1, 2, 3} is supported."""
        with pytest.raises(GridError):
            Grid(4, 8)

    def test_check_shape(self):
        """Arrays of the wrong shape are rejected."""
        grid = Grid(2, 8)
        grid.check(np.zeros((8, 8, 3)), components=3)
        with pytest.raises(GridError):
            grid.check(np.zeros((8, 3)), components=3)

    def test_integrate_constant(self):
        """Midpoint quadrature of 1 over the unit square is 1."""
        grid = Grid(2, 16)
        assert grid.integrate(np.ones(grid.shape)) == pytest.approx(1.0)

    def test_centered_gradient_exact_for_quadratics(self):
        """One-sided second-order closure reproduces the derivative of x^2."""
        grid = Grid(1, 16)
        x = grid.centers()
        np.testing.assert_allclose(centered_gradient(x ** 2, grid, 0), 2.0 * x, atol=1e-12)

    def test_face_divergence_is_negative_adjoint(self):
        """sum u D^T F = -sum Du F on a Neumann grid."""
        grid = Grid(1, 12)
        rng = np.random.default_rng(0)
        u = rng.normal(size=grid.shape)
        F = rng.normal(size=grid.face_shape(0))
        lhs = np.sum(face_difference(u, grid, 0) * F)
        rhs = -np.sum(u * face_divergence(F, grid, 0))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestDivFormOperator:
    """Test the flux-form operator."""

    @pytest.mark.parametrize("periodic", [True, False])
    def test_constants_in_kernel(self, periodic):
        """L applied to a constant vanishes for both closures."""
        grid = Grid(2, 8, periodic=periodic)
        op = DivFormOperator.constant(grid, np.array([[2.0, 0.3], [0.3, 1.0]]))
        np.testing.assert_allclose(op.apply(np.full(grid.shape, 3.0)), 0.0, atol=1e-10)

    def test_symmetric(self):
        """The assembled matrix is symmetric."""
        grid = Grid(2, 8)
        rng = np.random.default_rng(1)
        faces = [1.0 + rng.random(grid.face_shape(i)) for i in range(2)]
        cells = np.zeros(grid.shape + (2, 2))
        cells[..., 0, 0] = cells[..., 1, 1] = 1.5
        cells[..., 0, 1] = cells[..., 1, 0] = 0.2 * rng.random(grid.shape)
        op = DivFormOperator(grid, faces, cells)
        assert abs(op.matrix - op.matrix.T).max() < 1e-12
        assert op.has_cross_terms

    def test_wrong_face_shape(self):
        """Face coefficients must live on the faces of their axis."""
        grid = Grid(1, 8)
        with pytest.raises(GridError):
            DivFormOperator(grid, [np.ones(8)])

    def test_sine_interior_stencil(self):
        """div grad of sin(2 pi x) e_3 approaches -4 pi^2 sin(2 pi x) e_3 in the interior."""
        grid = Grid(1, 128)
        x = grid.centers()
        m = np.zeros(grid.shape + (3,))
        m[:, 2] = np.sin(2.0 * np.pi * x)
        Lm = DivFormOperator.constant(grid, np.eye(1)).apply(m)
        interior = slice(1, -1)
        expected = -4.0 * np.pi ** 2 * m[interior, 2]
        assert np.max(np.abs(Lm[interior, 2] - expected)) < 4.0 * np.pi ** 2 * 1e-3
        np.testing.assert_allclose(Lm[:, :2], 0.0)


class TestPeriodicSolve:
    """Test zero-mean periodic solves."""

    @pytest.fixture
    def laplacian(self):
        return DivFormOperator.constant(Grid(1, 64, periodic=True), np.eye(1))

    def test_zero_rhs(self, laplacian):
        """rhs = 0 gives u = 0."""
        u, info = solve_periodic_divform(laplacian, np.zeros(64))
        np.testing.assert_array_equal(u, 0.0)
        assert info["iterations"] == 0

    def test_sine_inversion(self, laplacian):
        """div grad u = sin(2 pi y) inverts to -sin(2 pi y) / lambda_h."""
        grid = laplacian.grid
        y = grid.centers()
        rhs = np.sin(2.0 * np.pi * y)
        u, _ = solve_periodic_divform(laplacian, rhs)
        lam = (2.0 - 2.0 * np.cos(2.0 * np.pi * grid.h)) / grid.h ** 2
        np.testing.assert_allclose(u, -rhs / lam, atol=1e-12)
        # continuum limit, O(h^2)
        assert np.max(np.abs(u + rhs / (4.0 * np.pi ** 2))) < 2e-3 * np.max(np.abs(u))

    def test_nonzero_mean_rejected(self, laplacian):
        """A right-hand side with mean 0.1 violates compatibility."""
        rhs = 0.1 + np.sin(2.0 * np.pi * laplacian.grid.centers())
        with pytest.raises(CompatibilityViolated):
            solve_periodic_divform(laplacian, rhs)

    def test_variable_coefficient_residual(self):
        """PCG reaches the requested tolerance on an oscillating coefficient."""
        grid = Grid(2, 32, periodic=True)
        faces = [2.0 + np.sin(2.0 * np.pi * grid.face_points(i)[..., 0]) for i in range(2)]
        op = DivFormOperator(grid, faces)
        rhs = np.cos(2.0 * np.pi * grid.points()[..., 1])
        u, info = solve_periodic_divform(op, rhs - rhs.mean(), tol=1e-10)
        assert info["residual"] < 1e-9
        assert abs(u.mean()) < 1e-12


def test_shifted_solve_identity():
    """With scale 0 the shifted system is the identity."""
    grid = Grid(2, 8)
    op = DivFormOperator.constant(grid, np.eye(2))
    rhs = np.random.default_rng(2).normal(size=grid.shape)
    u, _ = solve_shifted(op, rhs, 0.0, tol=1e-12)
    np.testing.assert_allclose(u, rhs, atol=1e-12)


def test_shifted_solve_residual():
    """(I - s L) u = rhs is solved to tolerance on a Neumann grid."""
    grid = Grid(2, 16)
    op = DivFormOperator.constant(grid, np.diag([1.0, 2.0]))
    rhs = np.random.default_rng(3).normal(size=grid.shape)
    u, _ = solve_shifted(op, rhs, 1e-2, tol=1e-11)
    residual = rhs - (u - 1e-2 * op.apply(u))
    assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(rhs)


if __name__ == '__main__':
    pytest.main([__file__])
