"""Tests for error norms, rate fits, transfers and the eps sweep."""

import pytest
import numpy as np
from pydantic import ValidationError

from homomag.core.errors import InsufficientPoints, TransferError
from homomag.core.grid import Grid
from homomag.core.harness import (REPORT_COLUMNS, SweepConfig, expected_laws, fit_rate, law_beta, norms,
                                  plan_sweep, reference_laws, run_sweep, sweep_tau)
from homomag.core.interpolate import averaging_matrix, transfer, transfer_to_points
from homomag.core.io import write_table
from homomag.core.llg import SimulationConfig
from homomag.core.material import CoefficientFamily, MaterialModel

EPS = np.array([2.0 ** -k for k in range(2, 7)])


class TestFitRate:
    """Test log-log least squares."""

    def test_linear_law(self):
        """err = eps gives slope 1."""
        fit = fit_rate(EPS, EPS)
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.residual < 1e-12
        assert len(fit.pairwise) == 4

    def test_square_root_law(self):
        """err = sqrt(eps) gives slope 1/2."""
        assert fit_rate(EPS, np.sqrt(EPS)).slope == pytest.approx(0.5, abs=1e-12)

    def test_logarithmic_law(self):
        """eps ln^2(1/eps + 1) has an apparent slope of about 0.316 on 2^-2..2^-6."""
        laws = reference_laws(1)
        assert fit_rate(EPS, laws["eps_log2"](EPS)).slope == pytest.approx(0.316, abs=0.01)

    def test_insufficient_points(self):
        """Two valid rows are not enough."""
        errors = np.array([0.1, 0.05, np.nan, np.nan, np.nan])
        with pytest.raises(InsufficientPoints):
            fit_rate(EPS, errors)

    def test_degenerate_errors(self):
        """Errors below the floor flag a degenerate sweep instead of a slope."""
        fit = fit_rate(EPS, np.full(5, 1e-12))
        assert fit.degenerate
        assert np.isnan(fit.slope)

    def test_ignores_failed_rows(self):
        """NaN rows are skipped."""
        errors = EPS.copy()
        errors[1] = np.nan
        fit = fit_rate(EPS, errors)
        assert fit.n_points == 4
        assert fit.slope == pytest.approx(1.0, abs=1e-12)


class TestLaws:
    """Test the reference error laws."""

    def test_beta_three_dimensions(self):
        """beta(eps) = eps^(5/6) for n = 3."""
        np.testing.assert_allclose(law_beta(EPS, 3), EPS ** (5.0 / 6.0))

    def test_beta_low_dimensions(self):
        """beta(eps) = eps ln^2(1/eps + 1) for n <= 2."""
        np.testing.assert_allclose(law_beta(EPS, 2), EPS * np.log(1.0 / EPS + 1.0) ** 2)

    def test_expected_laws(self):
        """Stray field switches the L2 law to beta."""
        assert expected_laws(0.0)["L2"] == "eps_log2"
        assert expected_laws(1.0)["L2"] == "beta"
        assert expected_laws(0.0)["H1"] == "sqrt_eps"
        assert expected_laws(1.0)["H1_corrected_neumann"] == "sqrt_eps"


class TestNorms:
    """Test discrete norms."""

    def test_sine_norms(self):
        """sin(2 pi x) has L2 norm 1/sqrt(2) and H1 seminorm sqrt(2) pi."""
        grid = Grid(1, 256)
        diff = np.zeros((256, 3))
        diff[:, 0] = np.sin(2.0 * np.pi * grid.centers())
        out = norms(diff, grid)
        assert out["L2"] == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-3)
        assert out["H1_semi"] == pytest.approx(np.sqrt(2.0) * np.pi, rel=1e-3)
        assert out["H1"] == pytest.approx(np.sqrt(out["L2"] ** 2 + out["H1_semi"] ** 2))


class TestTransfer:
    """Test grid transfers."""

    def test_cubic_exact(self):
        """Cubic splines reproduce cubic polynomials."""
        source, target = Grid(1, 16), Grid(1, 40)
        values = source.centers() ** 3 - 0.5 * source.centers()
        out = transfer(values, source, target)
        np.testing.assert_allclose(out, target.centers() ** 3 - 0.5 * target.centers(), atol=1e-12)

    def test_coarsening_averages_blocks(self):
        """64 -> 16 cells returns the mean of every block of four."""
        values = np.random.default_rng(0).standard_normal(64)
        out = transfer(values, Grid(1, 64), Grid(1, 16))
        np.testing.assert_allclose(out, values.reshape(16, 4).mean(axis=1), atol=1e-14)

    def test_coarsening_linear_field(self):
        """Averaging pairs of fine centres gives the coarse centres."""
        fine, coarse = Grid(2, 8), Grid(2, 4)
        out = transfer(fine.points(), fine, coarse)
        np.testing.assert_allclose(out, coarse.points(), atol=1e-15)

    def test_coarsening_conserves_integral(self):
        """Non-integer ratios still average: constants kept, integrals conserved."""
        fine, coarse = Grid(2, 12), Grid(2, 8)
        values = np.random.default_rng(1).standard_normal(fine.shape + (3,))
        out = transfer(values, fine, coarse)
        assert out.shape == coarse.shape + (3,)
        np.testing.assert_allclose(coarse.integrate(out), fine.integrate(values), atol=1e-13)
        np.testing.assert_allclose(transfer(np.ones(fine.shape), fine, coarse), 1.0, atol=1e-14)
        np.testing.assert_allclose(averaging_matrix(12, 8).sum(axis=1), 1.0, atol=1e-14)

    def test_periodic_coarsening(self):
        """Cell grids are averaged the same way."""
        values = np.arange(8.0)
        out = transfer(values, Grid(1, 8, periodic=True), Grid(1, 4, periodic=True))
        np.testing.assert_allclose(out, [0.5, 2.5, 4.5, 6.5], atol=1e-14)

    def test_mismatched_domains(self):
        """Dimension or closure mismatches fail."""
        with pytest.raises(TransferError):
            transfer(np.zeros(8), Grid(1, 8), Grid(2, 8))
        with pytest.raises(TransferError):
            transfer(np.zeros(8), Grid(1, 8, periodic=True), Grid(1, 8))

    def test_points_outside_domain(self):
        """Target coordinates must stay in [0, 1]."""
        with pytest.raises(TransferError):
            transfer_to_points(np.zeros(8), Grid(1, 8), [np.array([0.5, 1.2])])


class TestSweepConfig:
    """Test sweep validation and planning."""

    def test_sorted_decreasing(self):
        """eps values are run largest first."""
        assert SweepConfig(eps_list=[0.125, 0.5, 0.25]).eps_list == [0.5, 0.25, 0.125]

    @pytest.mark.parametrize("kwargs,message", [
        ({"eps_list": [0.25, 0.25]}, "duplicates"),
        ({"eps_list": []}, "empty"),
        ({"h_ratio": 4}, "h_ratio >= 8"),
        ({"workers": 0}, "workers"),
        ({"profile": "vortex"}, "Invalid profile"),
    ])
    def test_invalid(self, kwargs, message):
        """Bad sweep settings name the violated constraint."""
        with pytest.raises(ValidationError, match=message):
            SweepConfig(**kwargs)

    def test_cells_must_be_integer(self):
        """h_ratio / eps must be an integer."""
        with pytest.raises(ValueError):
            SweepConfig(eps_list=[0.3]).cells_for(0.3, 2)

    def test_plan(self):
        """Default n = 2 plan for eps = 2^-3..2^-5."""
        model = MaterialModel(dimension=2)
        sweep = SweepConfig(eps_list=[0.125, 0.0625, 0.03125])
        plan = plan_sweep(model, SimulationConfig(T=0.01), sweep)
        assert plan["N"].tolist() == [64, 128, 256]
        np.testing.assert_allclose(plan["tau"], 1.0 / 4096)
        assert sweep_tau(model, SimulationConfig(T=0.01), sweep) == pytest.approx(1.0 / 4096)
        assert list(plan.columns) == ["eps", "h", "N", "tau", "steps", "est_memory_mb"]
        assert plan["steps"].tolist() == [41, 41, 41]


@pytest.fixture(scope="module")
def constant_sweep():
    """Constant material: the oscillating and homogenized runs coincide."""
    model = MaterialModel(dimension=1, a=CoefficientFamily.const(1.0), K=CoefficientFamily.const(0.2))
    sim = SimulationConfig(T=0.01, tau=1e-3)
    sweep = SweepConfig(eps_list=[0.25, 0.125, 0.0625], m0_grid="per-row")
    return model, sim, sweep


class TestRunSweep:
    """Test full sweeps on small problems."""

    def test_constant_material_is_degenerate(self, constant_sweep):
        """Every error vanishes and the sweep is flagged degenerate."""
        model, sim, sweep = constant_sweep
        report = run_sweep(model, sim, sweep, N_cell=16)
        assert list(report.rows.columns) == REPORT_COLUMNS
        assert report.rows["N"].tolist() == [64, 128, 256]
        assert (report.rows["status"] == "ok").all()
        assert report.rows["L2"].max() < 1e-8
        assert report.flags["degenerate"]
        assert not report.flags["failed_rows"]

    def test_deterministic_across_workers(self, constant_sweep):
        """Rows are identical for one and two workers."""
        model, sim, sweep = constant_sweep
        serial = run_sweep(model, sim, sweep, N_cell=16)
        parallel = run_sweep(model, sim, sweep.model_copy(update={"workers": 2}), N_cell=16)
        cols = [c for c in REPORT_COLUMNS if c != "status"]
        np.testing.assert_array_equal(serial.rows[cols].to_numpy(), parallel.rows[cols].to_numpy())

    def test_report_csv_bytes_across_workers(self, constant_sweep, tmp_path):
        """report.csv is byte-identical for one and two workers."""
        model, sim, sweep = constant_sweep
        serial = run_sweep(model, sim, sweep, N_cell=16)
        parallel = run_sweep(model, sim, sweep.model_copy(update={"workers": 2}), N_cell=16)
        one = write_table(serial.rows, tmp_path / "report_1.csv")
        two = write_table(parallel.rows, tmp_path / "report_2.csv")
        assert one.read_bytes() == two.read_bytes()


if __name__ == '__main__':
    pytest.main([__file__])
