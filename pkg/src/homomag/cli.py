"""Command-line interface for homomag."""

import base64
import json
import sys
import warnings
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click

from . import __version__
from .api import (CellResult, converge as run_converge, correct as run_correct, evaluate_energy,
                  homogenize_material, plan, simulate as run_simulate)
from .core.config import RunConfig, parse_config, render_config
from .core.errors import HomomagError, MissingArtifact
from .core.io import (load_cells, load_snapshots, resolve_output_dir, save_cells, save_trajectory,
                      write_cell_summary, write_container, write_manifest, write_table)
from .core.performance import estimate_grid_memory, get_memory_usage, performance_guardrails
from .core.plots import create_energy_plot
from .core.report import generate_report, render_gnuplot, render_rates_text

EXIT_CODES = {
    0: "Success",
    1: "Unexpected error",
    2: "Config parse error",
    3: "Config or model validation error",
    4: "Solver failure",
    5: "Missing or unreadable artifact",
    6: "Energy monotonicity violated",
}


def _guard(action: Callable[[], None]) -> None:
    """Run a subcommand body and map exceptions to exit codes."""
    try:
        action()
    except HomomagError as e:
        print(f"\n❌ Error: {e}")
        print(f"📊 Exit code {e.exit_code}: {EXIT_CODES.get(e.exit_code, 'Unknown')}")
        sys.exit(e.exit_code)
    except Exception as e:
        print(f"\n❌ Unexpected error: {type(e).__name__}: {e}")
        sys.exit(1)
    sys.exit(0)


def _load(config_path: str, workers: Optional[int] = None) -> RunConfig:
    print(f"📁 Loading config: {config_path}")
    config = parse_config(config_path)
    if workers is not None:
        config.sweep = config.sweep.model_copy(update={"workers": workers})
    return config


def _finish(out_dir: Path, subcommand: str, config: RunConfig, outputs: List[Path], started: datetime,
            extra: Optional[Dict[str, Any]] = None) -> None:
    write_manifest(out_dir, subcommand, config.canonical_dict(), config.config_hash(), outputs,
                   started, extra=extra)
    print(f"\n✅ Success! Generated in {out_dir}:")
    for path in outputs:
        print(f"   • {Path(path).name}")
    print("   • manifest.json")


def _write_json(path: Path, data: Dict[str, Any]) -> Path:
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=str)
    return path


def _cells(config: RunConfig, cells_path: Optional[str]) -> Optional[CellResult]:
    if not cells_path:
        return None
    cells, hom = load_cells(cells_path)
    print(f"📁 Loaded cell container: {cells_path}")
    return CellResult(cells=cells, hom=hom)


@click.group()
@click.version_option(__version__, prog_name="homomag")
def main() -> None:
    """homomag: periodic homogenization of Landau-Lifshitz-Gilbert dynamics.

    Exit codes: 0 success, 1 unexpected error, 2 config parse error,
    3 validation error, 4 solver failure, 5 missing artifact,
    6 energy monotonicity violated.
    """


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--out", "out_dir", default=None, help="Output directory (default runs/cell-<hash>)")
def cell(config_path: str, out_dir: Optional[str]) -> None:
    """Solve the cell problems and write the homogenized model."""
    def action():
        started = datetime.now()
        config = _load(config_path)
        print(f"🧮 Solving cell problems (n={config.material.dimension}, N_cell={config.numerics.N_cell})...")
        result = homogenize_material(config)
        out = resolve_output_dir(out_dir, "cell", config.config_hash())
        outputs = [save_cells(out / "cells.bin", result.cells, result.hom, result.diagnostics),
                   write_cell_summary(out / "cell_summary.txt", result.hom, result.diagnostics),
                   _write_json(out / "cell_diagnostics.json", result.diagnostics)]
        print("\n" + result.hom.summary())
        _finish(out, "cell", config, outputs, started)
    _guard(action)


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--out", "out_dir", default=None, help="Output directory (default runs/simulate-<hash>)")
@click.option("--cells", "cells_path", default=None, help="Cell container from `cell` (homogenized runs)")
@click.option("--memory-cap", type=int, default=4096, help="Memory cap in MB")
@click.option("--plot", is_flag=True, help="Also write energy_history.png")
def simulate(config_path: str, out_dir: Optional[str], cells_path: Optional[str], memory_cap: int,
             plot: bool) -> None:
    """Run the eps problem (eps > 0) or the homogenized problem (eps = 0)."""
    def action():
        started = datetime.now()
        config = _load(config_path)
        sim = config.simulation
        estimate = estimate_grid_memory(config.material.dimension, sim.N, config.material.mu0)
        if get_memory_usage() + estimate > memory_cap:
            warnings.warn(f"Estimated memory {estimate:.1f}MB on top of current usage exceeds cap {memory_cap}MB")
        print(f"🧲 Simulating level={sim.level} eps={sim.eps} N={sim.N} T={sim.T}...")
        result = run_simulate(config, cell_result=_cells(config, cells_path))
        out = resolve_output_dir(out_dir, "simulate", config.config_hash())
        outputs = save_trajectory(out, result.trajectory, {"eps": sim.eps})
        outputs.append(write_table(result.dissipation, out / "dissipation.csv"))
        summary = {**result.summary, **result.trajectory.diagnostics, "initial": result.initial_diagnostics}
        outputs.append(_write_json(out / "run_summary.json", summary))
        if plot:
            png = out / "energy_history.png"
            png.write_bytes(base64.b64decode(create_energy_plot(result.trajectory.energy_log,
                                                                f"Energy history ({sim.level})")))
            outputs.append(png)
        print(f"📊 Steps: {result.trajectory.diagnostics['steps']}, "
              f"G: {result.summary['G_initial']:.6e} -> {result.summary['G_final']:.6e}, "
              f"max dissipation defect {result.summary['max_abs_defect']:.3e}")
        _finish(out, "simulate", config, outputs, started)
    _guard(action)


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--cells", "cells_path", required=True, help="Cell container from `cell`")
@click.option("--trajectory", "trajectory_path", required=True,
              help="Snapshot container of a homogenized `simulate` run")
@click.option("--eps", type=float, default=None, help="Period (default: config eps)")
@click.option("--out", "out_dir", default=None, help="Output directory (default runs/correct-<hash>)")
def correct(config_path: str, cells_path: str, trajectory_path: str, eps: Optional[float],
            out_dir: Optional[str]) -> None:
    """Build corrected approximations of the eps solution from a homogenized trajectory."""
    def action():
        started = datetime.now()
        config = _load(config_path)
        cell_result = _cells(config, cells_path)
        snapshots, attrs = load_snapshots(trajectory_path)
        if attrs.get("level") != "hom":
            raise MissingArtifact(f"{trajectory_path} is not a homogenized trajectory")
        print(f"🔧 Building correctors for {len(snapshots)} snapshots...")
        result = run_correct(config, cell_result, snapshots, eps=eps)
        out = resolve_output_dir(out_dir, "correct", config.config_hash())
        fields = {}
        for k, approx in enumerate(result.fields):
            for name, values in approx.items():
                fields[f"{name}_{k:05d}"] = values
        container = write_container(out / "corrected.bin", fields, result.grid.n, result.grid.N,
                                     {"kind": "corrected", "eps": result.eps, "times": result.times})
        outputs = [container, write_table(result.defects, out / "identity_defects.csv"),
                   _write_json(out / "phi_diagnostics.json", result.phi_diagnostics)]
        _finish(out, "correct", config, outputs, started)
    _guard(action)


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--out", "out_dir", default=None, help="Output directory (default runs/converge-<hash>)")
@click.option("--workers", type=int, default=None, help="Sweep rows run in parallel (-1 for all CPUs)")
@click.option("--memory-cap", type=int, default=4096, help="Memory cap in MB")
@click.option("--gnuplot", is_flag=True, help="Also write rates.gp")
@click.option("--dry-run", is_flag=True, help="Print the planned rows and exit")
@click.option("--cells", "cells_path", default=None, help="Reuse a cell container from `cell`")
def converge(config_path: str, out_dir: Optional[str], workers: Optional[int], memory_cap: int,
             gnuplot: bool, dry_run: bool, cells_path: Optional[str]) -> None:
    """Run the eps sweep and fit convergence rates."""
    def action():
        started = datetime.now()
        config = _load(config_path, workers)
        planned = plan(config)
        print("📋 Planned rows:")
        print(planned.to_string(index=False))
        guard = performance_guardrails(planned, memory_cap, workers=config.sweep.workers)
        if dry_run:
            print(f"\n🧾 Resolved config (hash {config.config_hash()[:12]}):")
            print(render_config(config), end="")
            print("\n🛑 Dry run: nothing executed")
            return
        print(f"\n🎯 Running {len(planned)} rows with {config.sweep.workers} worker(s), "
              f"RSS {guard['rss_mb']:.1f}MB...")
        report = run_converge(config, cell_result=_cells(config, cells_path))
        out = resolve_output_dir(out_dir, "converge", config.config_hash())
        outputs = [write_table(report.rows, out / "report.csv"),
                   write_table(report.timings, out / "timings.csv")]
        rates = out / "rates.txt"
        rates.write_text(render_rates_text(report, config.material.dimension, config.material.mu0))
        outputs.append(rates)
        html = out / "report.html"
        html.write_text(generate_report(report, config.canonical_dict(), config.material.dimension))
        outputs.append(html)
        if gnuplot:
            script = out / "rates.gp"
            script.write_text(render_gnuplot("report.csv", ["L2", "H1", "H1_corrected_neumann", "L2_tilde"]))
            outputs.append(script)
        outputs.append(_write_json(out / "sweep_diagnostics.json",
                                   {"flags": report.flags, "diagnostics": report.diagnostics,
                                    "fits": {k: v.model_dump() for k, v in report.fits.items()}}))
        for column in ("L2", "H1_corrected_neumann"):
            fit = report.fits.get(column)
            if fit is not None and not fit.degenerate:
                print(f"📈 {column} slope {fit.slope:.3f} (law {report.laws.get(column)})")
        if report.flags["failed_rows"]:
            print(f"⚠️  Failed rows: {report.flags['failed_rows']}")
        _finish(out, "converge", config, outputs, started, extra={"guardrails": guard})
    _guard(action)


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--field", "field_path", default=None, help="Snapshot container; the last snapshot is used")
@click.option("--cells", "cells_path", default=None, help="Cell container (homogenized level)")
@click.option("--out", "out_dir", default=None, help="Output directory (default runs/energy-<hash>)")
def energy(config_path: str, field_path: Optional[str], cells_path: Optional[str],
           out_dir: Optional[str]) -> None:
    """Evaluate the energy of a stored field or of the configured initial profile."""
    def action():
        started = datetime.now()
        config = _load(config_path)
        field = None
        if field_path:
            snapshots, _ = load_snapshots(field_path)
            field = snapshots[-1]
        result = evaluate_energy(config, field, cell_result=_cells(config, cells_path))
        for convention in ("landau", "variational"):
            terms = getattr(result, convention)
            print(f"⚡ {convention}: total {terms['total']:.6e}")
        out = resolve_output_dir(out_dir, "energy", config.config_hash())
        outputs = [_write_json(out / "energy.json", result.model_dump())]
        _finish(out, "energy", config, outputs, started)
    _guard(action)


if __name__ == '__main__':
    main()
