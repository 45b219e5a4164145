"""Stable Python API for homomag."""

from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .core.cellsolve import CellSolutions, HomogenizedModel, homogenize
from .core.config import RunConfig
from .core.correctors import (build_approximations, build_correctors, corrector_identity_defects,
                              make_initial_data, solve_neumann_phi)
from .core.errors import GridError, MissingArtifact
from .core.grid import Grid
from .core.harness import ConvergenceReport, plan_sweep, run_sweep
from .core.llg import (LLGSystem, MagnetizationField, Trajectory, build_eps_system, build_hom_system,
                       dissipation_report, energy_density_gl, energy_total, run)
from .core.strayfield import build_kernel


class CellResult(BaseModel):
    """Cell solutions and the homogenized model of one material."""

    cells: CellSolutions
    hom: HomogenizedModel
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"arbitrary_types_allowed": True}


class SimulationResult(BaseModel):
    """One LLG run with its energy balance."""

    trajectory: Trajectory
    dissipation: pd.DataFrame
    summary: Dict[str, Any]
    initial_diagnostics: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"arbitrary_types_allowed": True}


class CorrectionResult(BaseModel):
    """Corrected approximations of the eps solution at every snapshot time."""

    eps: float
    grid: Grid
    times: List[float]
    fields: List[Dict[str, np.ndarray]]
    defects: pd.DataFrame
    phi_diagnostics: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"arbitrary_types_allowed": True}


class EnergyResult(BaseModel):
    """Energies of one field in both conventions and g_l statistics."""

    level: str
    landau: Dict[str, float]
    variational: Dict[str, float]
    g_l: Dict[str, float]


def homogenize_material(config: RunConfig) -> CellResult:
    """Solve all cell problems for the configured material."""
    cells, hom, diagnostics = homogenize(config.material, config.numerics.N_cell,
                                         tol=config.numerics.cell_tol)
    return CellResult(cells=cells, hom=hom, diagnostics=diagnostics)


def _ensure_cells(config: RunConfig, cell_result: Optional[CellResult]) -> CellResult:
    return cell_result if cell_result is not None else homogenize_material(config)


def build_system(config: RunConfig, cell_result: Optional[CellResult] = None) -> Tuple[LLGSystem, Optional[CellResult]]:
    """LLG system of the configured level on the simulation grid."""
    sim = config.simulation
    grid = Grid(config.material.dimension, sim.N)
    if sim.level == "eps":
        return build_eps_system(config.material, sim.eps, grid), cell_result
    cell_result = _ensure_cells(config, cell_result)
    return build_hom_system(cell_result.hom, grid), cell_result


def simulate(config: RunConfig, cell_result: Optional[CellResult] = None,
             initial: Optional[MagnetizationField] = None) -> SimulationResult:
    """Run the eps problem (eps > 0) or the homogenized problem (eps = 0).

    Without ``initial`` the configured profile is used; for eps > 0 it is
    perturbed by the first-order corrector inside the collar-free interior.
    """
    sim = config.simulation
    model = config.material
    system, cell_result = build_system(config, cell_result)
    init_diag: Dict[str, Any] = {}
    if initial is None:
        if sim.level == "eps":
            cell_result = _ensure_cells(config, cell_result)
            _, initial, init_diag = make_initial_data(config.sweep.profile, model, sim.eps, system.grid,
                                                      cells=cell_result.cells, hom=cell_result.hom)
        else:
            initial, _, init_diag = make_initial_data(config.sweep.profile, model, 0.0, system.grid)
    trajectory = run(initial, system, sim)
    dissipation, summary = dissipation_report(trajectory)
    return SimulationResult(trajectory=trajectory, dissipation=dissipation, summary=summary,
                            initial_diagnostics=init_diag)


def correct(config: RunConfig, cell_result: CellResult, snapshots: List[MagnetizationField],
            eps: Optional[float] = None) -> CorrectionResult:
    """Corrected approximations on the eps grid for each homogenized snapshot.

    Raises:
        MissingArtifact: If there are no snapshots
        GridError: If the simulation grid does not resolve eps
    """
    if not snapshots:
        raise MissingArtifact("no homogenized snapshots to correct")
    model = config.material
    eps = config.simulation.eps if eps is None else eps
    if not eps > 0.0:
        raise GridError("correct needs eps > 0")
    N = config.simulation.N
    if 1.0 / N > eps / 8.0 + 1e-15:
        raise GridError(f"h <= eps/8 is required (h = 1/{N}, eps = {eps})")
    grid = Grid(model.dimension, N)
    hom = cell_result.hom
    phi, phi_diag = solve_neumann_phi(model, hom, eps, grid, tol=config.simulation.cg_tol,
                                      maxiter_factor=config.simulation.cg_maxiter_factor)
    kernel = build_kernel(snapshots[0].grid) if hom.mu0 > 0.0 else None
    fields, rows = [], []
    for snap in snapshots:
        bundle = build_correctors(snap, cell_result.cells, hom, model, eps, grid, phi, kernel=kernel,
                                  zeeman_term=config.sweep.zeeman_term)
        approx = build_approximations(snap, bundle)
        fields.append({"tilde": approx["tilde"], "neumann_corrected": approx["neumann_corrected"],
                       "twoscale_corrected": approx["twoscale_corrected"]})
        defects = corrector_identity_defects(bundle)
        defects["t"] = snap.t
        defects["tilde_norm_defect"] = float(np.max(np.abs(np.linalg.norm(approx["tilde"], axis=-1) - 1.0)))
        rows.append(defects)
    table = pd.DataFrame(rows, columns=["t", "m0_dot_m1", "m0_dot_m2", "tilde_norm_defect"])
    return CorrectionResult(eps=eps, grid=grid, times=[s.t for s in snapshots], fields=fields,
                            defects=table, phi_diagnostics=phi_diag)


def converge(config: RunConfig, cell_result: Optional[CellResult] = None) -> ConvergenceReport:
    """Full eps sweep with rate fits."""
    homogenized = None if cell_result is None else (cell_result.cells, cell_result.hom)
    return run_sweep(config.material, config.simulation, config.sweep, N_cell=config.numerics.N_cell,
                     cell_tol=config.numerics.cell_tol, homogenized=homogenized)


def plan(config: RunConfig) -> pd.DataFrame:
    """Rows a sweep would run, without running them."""
    return plan_sweep(config.material, config.simulation, config.sweep)


def evaluate_energy(config: RunConfig, field: Optional[MagnetizationField] = None,
                    cell_result: Optional[CellResult] = None) -> EnergyResult:
    """Energy of a stored field, or of the configured initial profile."""
    system, _ = build_system(config, cell_result)
    if field is None:
        field, _, _ = make_initial_data(config.sweep.profile, config.material, 0.0, system.grid)
    elif field.grid != system.grid:
        raise GridError(f"field on {field.grid!r}, configured grid is {system.grid!r}")
    m = field.values
    landau_total, landau = energy_total(m, system, "landau")
    var_total, variational = energy_total(m, system, "variational")
    landau["total"] = landau_total
    variational["total"] = var_total
    g = energy_density_gl(m, system)
    stats = {"min": float(np.min(g)), "max": float(np.max(g)), "mean": float(np.mean(g)),
             "integral": float(system.grid.integrate(g))}
    return EnergyResult(level=system.level, landau=landau, variational=variational, g_l=stats)
