"""Report rendering (HTML, rates.txt, gnuplot) using Jinja2 templates."""

from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from jinja2 import Environment, FileSystemLoader

from .harness import ERROR_COLUMNS, ConvergenceReport, reference_laws
from .plots import create_convergence_plot, create_pairwise_slope_plot


def load_template(template_name: str = "report.html.j2"):
    """Load Jinja2 template.

    Args:
        template_name: Name of template file

    Returns:
        Template content
    """
    template_dir = Path(__file__).parent.parent / "templates"
    template_path = template_dir / template_name

    if not template_path.exists():
        raise FileNotFoundError(f"Template not found: {template_path}")

    env = Environment(loader=FileSystemLoader(str(template_dir)), keep_trailing_newline=True)
    return env.get_template(template_name)


def rate_table(report: ConvergenceReport) -> List[Dict[str, Any]]:
    """One entry per error column: fitted slope next to the slope of its reference law."""
    table = []
    for column in ERROR_COLUMNS:
        fit = report.fits.get(column)
        law = report.laws.get(column)
        table.append({
            "column": column,
            "slope": None if fit is None or fit.degenerate else fit.slope,
            "stderr": None if fit is None or fit.degenerate else fit.stderr,
            "residual": None if fit is None or fit.degenerate else fit.residual,
            "n_points": 0 if fit is None else fit.n_points,
            "degenerate": bool(fit is not None and fit.degenerate),
            "pairwise": [] if fit is None else fit.pairwise,
            "law": law,
            "law_slope": report.law_slopes.get(law) if law else None,
        })
    return table


def render_rates_text(report: ConvergenceReport, dimension: int, mu0: float) -> str:
    """rates.txt: fitted slopes and reference laws side by side."""
    template = load_template("rates.txt.j2")
    return template.render(rates=rate_table(report), law_slopes=report.law_slopes,
                           dimension=dimension, mu0=mu0, flags=report.flags,
                           eps=list(report.rows["eps"]))


def render_gnuplot(csv_name: str, columns: List[str], output_name: str = "rates.png") -> str:
    """Ready-to-run gnuplot script for a report CSV."""
    template = load_template("gnuplot.j2")
    header = ["eps", "h", "N", "status"] + list(ERROR_COLUMNS)
    series = [{"name": c, "index": header.index(c) + 1} for c in columns if c in header]
    return template.render(csv_name=csv_name, series=series, output_name=output_name)


def generate_report(report: ConvergenceReport, config: Dict[str, Any], dimension: int,
                    plots: Optional[Dict[str, str]] = None) -> str:
    """Generate the HTML convergence report.

    Args:
        report: Sweep result
        config: Canonical config echoed into the report
        dimension: Spatial dimension, selects the reference laws
        plots: Precomputed base64 figures; built here when omitted

    Returns:
        HTML report content
    """
    if plots is None:
        eps = report.rows["eps"].to_numpy()
        law_fns = reference_laws(dimension)
        laws = {name: law_fns[name](eps) for name in sorted({report.laws["L2"], report.laws["H1"]})}
        plots = {
            "errors": create_convergence_plot(report.rows, ["L2", "L2_corrected_twoscale", "L2_tilde"], laws,
                                              title="L2 errors"),
            "h1_errors": create_convergence_plot(report.rows, ["H1", "H1_corrected_twoscale",
                                                               "H1_corrected_neumann"], title="H1 errors"),
            "slopes": create_pairwise_slope_plot({c: f.pairwise for c, f in report.fits.items()
                                                  if not f.degenerate}, eps),
        }
    template = load_template()
    context = {
        "config": config,
        "rows": report.rows.to_dict(orient="records"),
        "columns": list(report.rows.columns),
        "rates": rate_table(report),
        "hom": report.hom,
        "flags": report.flags,
        "diagnostics": report.diagnostics,
        "plots": plots,
        "is_finite": lambda v: isinstance(v, float) and bool(np.isfinite(v)),
    }
    return template.render(**context)
