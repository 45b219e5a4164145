"""Tests for report rendering, plots and memory guardrails."""

import warnings

import pytest
import numpy as np
import pandas as pd

from homomag.core.cellsolve import HomogenizedModel
from homomag.core.harness import (ERROR_COLUMNS, REPORT_COLUMNS, ConvergenceReport, expected_laws, fit_rate,
                                  reference_laws)
from homomag.core.performance import (estimate_grid_memory, get_memory_usage, parallel_map,
                                      performance_guardrails)
from homomag.core.plots import create_convergence_plot, create_energy_plot
from homomag.core.report import generate_report, rate_table, render_gnuplot, render_rates_text


@pytest.fixture
def synthetic_report():
    """Sweep rows following exact power laws, with one failed row."""
    eps = np.array([2.0 ** -k for k in range(2, 7)])
    rows = pd.DataFrame({"eps": eps, "h": eps / 16, "N": (16 / eps).astype(int), "status": "ok"})
    for column in ERROR_COLUMNS:
        rows[column] = 0.3 * eps if column.startswith("L2") else 0.8 * np.sqrt(eps)
    rows.loc[4, "status"] = "failed: NoConvergence"
    rows.loc[4, ERROR_COLUMNS] = np.nan
    rows = rows[REPORT_COLUMNS]
    fits = {c: fit_rate(rows["eps"].to_numpy(), rows[c].to_numpy()) for c in ERROR_COLUMNS}
    laws = expected_laws(0.0)
    law_slopes = {name: fit_rate(eps, fn(eps)).slope for name, fn in reference_laws(1).items()}
    hom = HomogenizedModel(dimension=1, a0=[[np.sqrt(3.0)]], M0=1.0, K0=0.5, H_d0=[[0.0]],
                           u=[0.0, 0.0, 1.0], alpha=1.0, mu0=0.0, h_a=[0.0, 0.0, 0.0])
    timings = pd.DataFrame({"eps": eps, "N": rows["N"], "steps": 10, "inner_iterations": 100,
                            "runtime_s": 0.1})
    return ConvergenceReport(rows=rows, timings=timings, fits=fits, laws=laws, law_slopes=law_slopes,
                             flags={"degenerate": False, "decay_violations": {},
                                    "corrected_worse_than_uncorrected": [], "failed_rows": [eps[4]]},
                             diagnostics={"tau": 1e-3}, hom=hom)


class TestRateTable:
    """Test rate summaries."""

    def test_slopes(self, synthetic_report):
        """L2 columns fit slope 1, H1 columns slope 1/2, on the four valid rows."""
        table = {entry["column"]: entry for entry in rate_table(synthetic_report)}
        assert table["L2"]["slope"] == pytest.approx(1.0, abs=1e-10)
        assert table["H1"]["slope"] == pytest.approx(0.5, abs=1e-10)
        assert table["L2"]["n_points"] == 4
        assert table["L2"]["law"] == "eps_log2"
        assert table["H1"]["law_slope"] == pytest.approx(0.5, abs=1e-10)

    def test_rates_text(self, synthetic_report):
        """rates.txt names every column and the reference laws."""
        text = render_rates_text(synthetic_report, 1, 0.0)
        for column in ("L2", "H1", "H1_corrected_neumann"):
            assert column in text
        assert "eps_log2" in text

    def test_gnuplot(self):
        """Column indices follow the report CSV layout."""
        script = render_gnuplot("report.csv", ["L2", "H1"])
        assert "report.csv" in script
        assert f"{REPORT_COLUMNS.index('L2') + 1}" in script


class TestHtmlReport:
    """Test the HTML report."""

    def test_generate(self, synthetic_report):
        """The report embeds the plots, the rows and the homogenized tensor."""
        html = generate_report(synthetic_report, {"material": {"alpha": 1.0}}, 1)
        assert "<html" in html.lower()
        assert "data:image/png;base64," in html
        assert "failed: NoConvergence" in html

    def test_plots(self, synthetic_report):
        """Plots come back as base64 strings."""
        image = create_convergence_plot(synthetic_report.rows, ["L2", "H1"])
        assert isinstance(image, str) and len(image) > 100
        log = pd.DataFrame({"t": [0.0, 0.1, 0.2], "G_total": [1.0, 0.8, 0.7], "damping_integral": [0.0, 0.15, 0.25]})
        assert len(create_energy_plot(log)) > 100

    def test_energy_plot_draws_both_curves(self, monkeypatch):
        """The energy history is one seaborn line plot with G and the balance curve."""
        import homomag.core.plots as plots
        calls = []
        original = plots.sns.lineplot

        def recording(*args, **kwargs):
            calls.append(kwargs["data"])
            return original(*args, **kwargs)

        monkeypatch.setattr(plots.sns, "lineplot", recording)
        log = pd.DataFrame({"t": [0.0, 0.1], "G_total": [1.0, 0.8], "damping_integral": [0.0, 0.15]})
        create_energy_plot(log)
        assert len(calls) == 1
        assert set(calls[0]["curve"]) == {"G", "G + damping integral"}
        np.testing.assert_allclose(calls[0].loc[calls[0]["curve"] != "G", "energy"], [1.0, 0.95])


class TestPerformance:
    """Test memory guardrails and the row pool."""

    def test_memory_usage(self):
        """RSS is positive."""
        assert get_memory_usage() > 0

    def test_estimate_grows_with_stray_field(self):
        """The demag kernel adds memory."""
        assert estimate_grid_memory(2, 64, mu0=1.0) > estimate_grid_memory(2, 64)
        assert estimate_grid_memory(2, 128) == pytest.approx(4 * estimate_grid_memory(2, 64))

    def test_guardrail_warns(self):
        """A plan far above the cap warns."""
        plan = pd.DataFrame({"est_memory_mb": [1e6, 10.0]})
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            guard = performance_guardrails(plan, memory_cap_mb=100)
        assert any("exceeds cap" in str(w.message) for w in caught)
        assert guard["memory_cap_mb"] == 100

    @pytest.mark.parametrize("n_jobs", [1, 2])
    def test_parallel_map_keeps_order(self, n_jobs):
        """Results come back in argument order."""
        assert parallel_map(pow, [(2, k) for k in range(6)], n_jobs=n_jobs) == [1, 2, 4, 8, 16, 32]


if __name__ == '__main__':
    pytest.main([__file__])
