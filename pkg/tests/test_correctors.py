"""Tests for correctors, the Neumann corrector and initial data."""

import pytest
import numpy as np

from homomag.core.cellsolve import homogenize
from homomag.core.errors import ProfileError, TimeMismatchError
from homomag.core.grid import Grid, centered_gradient
from homomag.core.llg import MagnetizationField
from homomag.core.material import CoefficientFamily, MaterialModel
from homomag.core.correctors import (COLLAR, build_approximations, build_correctors, build_m1, build_m2,
                                     collar_cutoff, corrector_identity_defects, evaluate_profile,
                                     make_initial_data, neumann_rhs, slow_field, solve_neumann_phi)
from homomag.core.strayfield import build_kernel


def harmonic(mean, amp, k, fn="sin"):
    return CoefficientFamily(family="single-harmonic", mean=mean, amp=[amp], k=[list(k)], fn=fn)


def random_unit_field(grid, rng, t=0.0):
    """Smooth random unit field built from low cosine modes around a random direction."""
    x = grid.points()
    base = rng.normal(size=3)
    v = np.broadcast_to(2.0 * base / np.linalg.norm(base), grid.shape + (3,)).copy()
    for c in range(3):
        for _ in range(3):
            k = rng.integers(0, 3, size=grid.n)
            v[..., c] += 0.2 * rng.normal() * np.cos(np.pi * (x @ k) + rng.uniform(0.0, np.pi))
    return MagnetizationField(grid=grid, values=v / np.linalg.norm(v, axis=-1, keepdims=True), t=t)


@pytest.fixture(scope="module")
def layered_1d():
    model = MaterialModel(dimension=1, a=harmonic(2.0, 1.0, (1,)), K=harmonic(1.0, 0.5, (1,), fn="cos"),
                          M_s=harmonic(2.0, 0.5, (1,)), u=[1.0, 0.0, 0.0], h_a=[0.0, 0.3, 0.1])
    cells, hom, _ = homogenize(model, 32)
    return model, cells, hom


@pytest.fixture(scope="module")
def magnetic_2d():
    a = CoefficientFamily(family="multi-harmonic", mean=2.0, amp=[0.5, 0.3], k=[[1, 0], [1, 1]])
    model = MaterialModel(dimension=2, a=a, a_entries={"12": harmonic(0.0, 0.2, (0, 1), fn="cos")},
                          K=harmonic(1.0, 0.5, (1, 0), fn="cos"), M_s=harmonic(2.0, 1.0, (1, 1), fn="cos"),
                          mu0=1.0, h_a=[0.1, 0.0, 0.2])
    cells, hom, _ = homogenize(model, 16)
    return model, cells, hom


class TestCorrectorIdentities:
    """Test m0 . m1 = 0 and m0 . m2 = -1/2 |m1|^2."""

    def test_one_dimension(self, layered_1d):
        """Ten random smooth m0 in one dimension."""
        model, cells, hom = layered_1d
        rng = np.random.default_rng(11)
        grid = Grid(1, 128)
        phi = np.zeros((1, 128))
        for _ in range(10):
            m0 = random_unit_field(Grid(1, 32), rng)
            bundle = build_correctors(m0, cells, hom, model, 1.0 / 16.0, grid, phi)
            defects = corrector_identity_defects(bundle)
            assert defects["m0_dot_m1"] <= 1e-10
            assert defects["m0_dot_m2"] <= 1e-10

    def test_two_dimensions_with_stray_field(self, magnetic_2d):
        """Ten random smooth m0 with mu0 = 1 and a kernel on the homogenized grid."""
        model, cells, hom = magnetic_2d
        rng = np.random.default_rng(12)
        coarse = Grid(2, 16)
        kernel = build_kernel(coarse)
        grid = Grid(2, 32)
        phi = np.zeros((2, 32, 32))
        for _ in range(10):
            m0 = random_unit_field(coarse, rng)
            bundle = build_correctors(m0, cells, hom, model, 0.25, grid, phi, kernel=kernel)
            defects = corrector_identity_defects(bundle)
            assert defects["m0_dot_m1"] <= 1e-7
            assert defects["m0_dot_m2"] <= 1e-7
            assert set(bundle.m2_variants) == {"literal", "fluctuation"}

    def test_tilde_length_defect_is_second_order(self, layered_1d):
        """max ||m0 + eps m1 + eps^2 m2| - 1| decays at least like eps^1.8."""
        model, cells, hom = layered_1d
        m0 = random_unit_field(Grid(1, 32), np.random.default_rng(21))
        defects = []
        for eps in (0.25, 0.125, 0.0625):
            grid = Grid(1, int(16 / eps))
            phi = np.moveaxis(grid.points(), -1, 0)
            bundle = build_correctors(m0, cells, hom, model, eps, grid, phi)
            tilde = build_approximations(m0, bundle)["tilde"]
            defects.append(float(np.max(np.abs(np.linalg.norm(tilde, axis=-1) - 1.0))))
        orders = np.log2(np.array(defects[:-1]) / np.array(defects[1:]))
        assert defects[0] > 0.0
        assert np.all(orders >= 1.8)

    def test_coarser_target_uses_cell_averages(self, layered_1d):
        """m0 from a finer homogenized grid arrives as normalized cell averages."""
        model, cells, hom = layered_1d
        m0 = random_unit_field(Grid(1, 64), np.random.default_rng(8))
        grid = Grid(1, 16)
        slow = slow_field(m0, grid)
        averaged = m0.values.reshape(16, 4, 3).mean(axis=1)
        np.testing.assert_allclose(slow.m0, averaged / np.linalg.norm(averaged, axis=-1, keepdims=True),
                                   atol=1e-14)
        bundle = build_correctors(m0, cells, hom, model, 0.5, grid, np.zeros((1, 16)))
        assert corrector_identity_defects(bundle)["m0_dot_m1"] <= 1e-12

    def test_constant_m0(self, layered_1d):
        """Constant m0 has no gradient, hence m1 = 0."""
        _, cells, _ = layered_1d
        grid = Grid(1, 64)
        m0 = MagnetizationField(grid=Grid(1, 16), values=np.tile([0.0, 0.6, 0.8], (16, 1)))
        np.testing.assert_allclose(build_m1(slow_field(m0, grid), cells, 0.125), 0.0, atol=1e-12)

    def test_constant_exchange(self):
        """Constant a has chi = 0, hence m1 = 0."""
        model = MaterialModel(dimension=1, a=CoefficientFamily.const(1.5))
        cells, _, _ = homogenize(model, 16)
        m0 = random_unit_field(Grid(1, 16), np.random.default_rng(3))
        np.testing.assert_array_equal(build_m1(slow_field(m0, Grid(1, 64)), cells, 0.25), 0.0)

    def test_aligned_field_and_axis(self):
        """Constant m0 = u parallel to h_a leaves m2 = 0."""
        model = MaterialModel(dimension=1, K=harmonic(1.0, 0.5, (1,), fn="cos"),
                              M_s=harmonic(2.0, 0.5, (1,)), h_a=[0.0, 0.0, 0.3])
        cells, hom, _ = homogenize(model, 16)
        m0 = MagnetizationField(grid=Grid(1, 16), values=np.tile([0.0, 0.0, 1.0], (16, 1)))
        slow = slow_field(m0, Grid(1, 64))
        m2 = build_m2(slow, cells, hom, 0.25, model=model)
        np.testing.assert_allclose(m2, 0.0, atol=1e-10)


class TestNeumannCorrector:
    """Test Phi_i."""

    def test_boundary_source_balances(self):
        """The co-normal source has zero total."""
        a0 = np.array([[2.0, 0.3], [0.3, 1.0]])
        grid = Grid(2, 16)
        for i in range(2):
            assert abs(np.sum(neumann_rhs(a0, grid, i))) < 1e-10

    def test_constant_coefficient_is_identity(self):
        """Constant a gives Phi = x."""
        model = MaterialModel(dimension=2, a=CoefficientFamily.const(1.5))
        _, hom, _ = homogenize(model, 16)
        grid = Grid(2, 16)
        phi, info = solve_neumann_phi(model, hom, 0.25, grid)
        np.testing.assert_allclose(phi, np.moveaxis(grid.points(), -1, 0), atol=1e-10)
        assert info["phi_sup_deviation"] < 1e-10

    def test_oscillating_coefficient_stays_close(self, layered_1d):
        """|Phi - x| is of order eps."""
        model, _, hom = layered_1d
        grid = Grid(1, 128)
        phi, info = solve_neumann_phi(model, hom, 1.0 / 16.0, grid)
        assert 0.0 < info["phi_sup_deviation"] < 0.1
        assert phi.shape == (1, 128)

    def test_deviation_constant_is_stable(self, layered_1d):
        """|Phi - x| / (eps ln(1/eps + 1)) stays bounded as eps shrinks."""
        model, _, hom = layered_1d
        constants = []
        for eps in (0.25, 0.125, 0.0625):
            _, info = solve_neumann_phi(model, hom, eps, Grid(1, int(16 / eps)))
            constants.append(info["phi_sup_deviation"] / (eps * np.log(1.0 / eps + 1.0)))
        assert min(constants) > 0.0
        assert max(constants) < 1.0
        assert max(constants) / min(constants) < 2.0

    def test_time_mismatch(self, layered_1d):
        """Correctors at t = 0 cannot correct m0 at t = 0.5."""
        model, cells, hom = layered_1d
        grid = Grid(1, 64)
        m0 = random_unit_field(Grid(1, 16), np.random.default_rng(5))
        phi = np.moveaxis(grid.points(), -1, 0)
        bundle = build_correctors(m0, cells, hom, model, 0.125, grid, phi)
        later = MagnetizationField(grid=m0.grid, values=m0.values, t=0.5)
        with pytest.raises(TimeMismatchError):
            build_approximations(later, bundle)
        approx = build_approximations(m0, bundle)
        assert {"tilde", "neumann_corrected", "twoscale_corrected", "tilde_literal"} <= set(approx)
        np.testing.assert_allclose(approx["neumann_corrected"], bundle.m0, atol=1e-15)


class TestInitialData:
    """Test profiles and the collar surrogate."""

    @pytest.mark.parametrize("profile", ["uniform", "tilt-bump", "swirl-bump"])
    def test_profiles_are_unit(self, profile):
        """Every profile is unit length on the grid."""
        m, grad = evaluate_profile(profile, Grid(2, 16))
        np.testing.assert_allclose(np.linalg.norm(m, axis=-1), 1.0, atol=1e-12)
        assert grad.shape == (2, 16, 16, 3)

    def test_unknown_profile(self):
        """Unknown names raise ProfileError."""
        with pytest.raises(ProfileError):
            evaluate_profile("vortex", Grid(2, 8))

    def test_profile_gradient(self):
        """Analytic tilt-bump gradient matches finite differences."""
        grid = Grid(1, 512)
        m, grad = evaluate_profile("tilt-bump", grid)
        numeric = centered_gradient(m, grid, 0)
        assert np.max(np.abs(numeric - grad[0])) < 1e-2 * np.max(np.abs(grad[0]))

    def test_bump_vanishes_in_collar(self):
        """Outside the interior box the tilt-bump profile equals e_3."""
        grid = Grid(2, 20)
        m, _ = evaluate_profile("tilt-bump", grid)
        outside = collar_cutoff(grid) == 0.0
        assert outside.any()
        np.testing.assert_allclose(m[outside], np.tile([0.0, 0.0, 1.0], (outside.sum(), 1)), atol=1e-15)
        x = grid.points()
        assert np.all(np.any((x <= COLLAR) | (x >= 1.0 - COLLAR), axis=-1)[outside])

    def test_uniform_profile_unchanged(self):
        """No gradient, no oscillating perturbation."""
        model = MaterialModel(dimension=1, a=harmonic(2.0, 1.0, (1,)))
        init0, init_eps, diag = make_initial_data("uniform", model, 0.25, Grid(1, 32), N_cell=16)
        np.testing.assert_allclose(init_eps.values, init0.values, atol=1e-15)
        assert diag["l2_deviation"] < 1e-14

    def test_deviation_shrinks_with_eps(self):
        """||m_init^eps - m_init^0|| is first order in eps."""
        model = MaterialModel(dimension=1, a=harmonic(2.0, 1.0, (1,)))
        cells, hom, _ = homogenize(model, 32)
        grid = Grid(1, 256)
        devs = []
        for eps in (0.25, 0.125, 0.0625):
            _, _, diag = make_initial_data("tilt-bump", model, eps, grid, cells=cells, hom=hom)
            devs.append(diag["l2_deviation"])
        order = np.log2(devs[0] / devs[-1]) / 2.0
        assert order >= 0.9
        assert "surrogate_residual" in diag

    def test_homogenized_level(self):
        """eps = 0 returns two copies of the profile."""
        init0, init_eps, _ = make_initial_data("swirl-bump", MaterialModel(dimension=2), 0.0, Grid(2, 8))
        np.testing.assert_array_equal(init0.values, init_eps.values)


if __name__ == '__main__':
    pytest.main([__file__])
