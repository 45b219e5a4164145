"""Epsilon sweeps, discrete error norms and convergence-rate fits."""

from typing import Any, Callable, Dict, List, Optional, Tuple
import time
import warnings
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator
from scipy import stats

from .cellsolve import CELL_TOL, CellSolutions, HomogenizedModel, homogenize
from .correctors import (PROFILE_REGISTRY, ZEEMAN_TERMS, build_approximations, build_correctors,
                         corrector_identity_defects, make_initial_data, solve_neumann_phi)
from .errors import HomomagError, InsufficientPoints
from .grid import Grid, centered_gradient
from .llg import MagnetizationField, SimulationConfig, build_eps_system, build_hom_system, run
from .material import MaterialModel
from .performance import estimate_grid_memory, parallel_map
from .strayfield import build_kernel

DEGENERATE_FLOOR = 1e-8
DECAY_SLACK = 0.05
ERROR_COLUMNS = ["L2", "H1", "L2_corrected_twoscale", "H1_corrected_twoscale",
                 "H1_corrected_neumann", "L2_tilde", "L2_tilde_literal", "L2_tilde_fluctuation"]
REPORT_COLUMNS = ["eps", "h", "N", "status"] + ERROR_COLUMNS


class SweepConfig(BaseModel):
    """Which eps values to run and how to resolve them."""

    eps_list: List[float] = Field(default_factory=lambda: [2.0 ** -k for k in range(2, 7)],
                                  description="Periods, run in decreasing order")
    h_ratio: Optional[int] = Field(default=None, description="eps / h (default 16 for n = 1, 8 otherwise)")
    N_hom: Optional[int] = Field(default=None, description="Cells per axis of the shared m0 run")
    profile: str = Field(default="tilt-bump", description="Initial profile")
    zeeman_term: str = Field(default="literal", description="Zeeman entry of the second-order source")
    spot_check: bool = Field(default=False, description="Re-run the largest eps with h halved")
    m0_grid: str = Field(default="shared", description="shared: one m0 run on N_hom; per-row: m0 rerun on every row grid")
    workers: int = Field(default=1, description="Rows run in parallel")

    @field_validator('eps_list')
    @classmethod
    def validate_eps_list(cls, v):
        if not v:
            raise ValueError("eps_list must not be empty")
        if any(not 0.0 < e <= 1.0 for e in v):
            raise ValueError("0 < eps <= 1 for every eps")
        if len(set(v)) != len(v):
            raise ValueError("eps_list has duplicates")
        return sorted(v, reverse=True)

    @field_validator('h_ratio')
    @classmethod
    def validate_h_ratio(cls, v):
        if v is not None and v < 8:
            raise ValueError("h_ratio >= 8 (h <= eps/8)")
        return v

    @field_validator('N_hom')
    @classmethod
    def validate_N_hom(cls, v):
        if v is not None and v < 8:
            raise ValueError("N_hom >= 8")
        return v

    @field_validator('profile')
    @classmethod
    def validate_profile(cls, v):
        if v not in PROFILE_REGISTRY:
            raise ValueError(f"Invalid profile: {v}. Must be one of {list(PROFILE_REGISTRY)}")
        return v

    @field_validator('zeeman_term')
    @classmethod
    def validate_zeeman_term(cls, v):
        if v not in ZEEMAN_TERMS:
            raise ValueError(f"Invalid zeeman_term: {v}. Must be one of {list(ZEEMAN_TERMS)}")
        return v

    @field_validator('m0_grid')
    @classmethod
    def validate_m0_grid(cls, v):
        if v not in ("shared", "per-row"):
            raise ValueError(f"Invalid m0_grid: {v}. Must be one of ['shared', 'per-row']")
        return v

    @field_validator('workers')
    @classmethod
    def validate_workers(cls, v):
        if v == 0 or v < -1:
            raise ValueError("workers >= 1 or -1")
        return v

    def resolved_h_ratio(self, n: int) -> int:
        if self.h_ratio is not None:
            return self.h_ratio
        return 16 if n == 1 else 8

    def resolved_N_hom(self, n: int) -> int:
        if self.N_hom is not None:
            return self.N_hom
        return 256 if n == 1 else 64

    def cells_for(self, eps: float, n: int) -> int:
        """Domain cells per axis for one eps; 1 / h must be an integer."""
        exact = self.resolved_h_ratio(n) / eps
        N = int(round(exact))
        if abs(N - exact) > 1e-9 * exact:
            raise ValueError(f"h_ratio / eps = {exact} is not an integer")
        return N


class RateFit(BaseModel):
    """Least-squares slope of log(error) against log(eps)."""

    slope: float
    intercept: float
    stderr: float
    residual: float
    n_points: int
    pairwise: List[float] = Field(default_factory=list)
    degenerate: bool = False


class ConvergenceReport(BaseModel):
    """Rows, fits and checks of one sweep."""

    rows: pd.DataFrame
    timings: pd.DataFrame
    fits: Dict[str, RateFit]
    laws: Dict[str, str]
    law_slopes: Dict[str, float]
    flags: Dict[str, Any]
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
    hom: HomogenizedModel

    model_config = {"arbitrary_types_allowed": True}


def norms(diff: np.ndarray, grid: Grid) -> Dict[str, float]:
    """Midpoint L2 norm and the H1 norm with second-order cell gradients."""
    l2 = grid.l2_norm(diff)
    semi_sq = 0.0
    if grid.N >= 3:
        for i in range(grid.n):
            semi_sq += grid.l2_norm(centered_gradient(diff, grid, i)) ** 2
    return {"L2": l2, "H1_semi": float(np.sqrt(semi_sq)), "H1": float(np.sqrt(l2 ** 2 + semi_sq))}


def fit_rate(eps: np.ndarray, errors: np.ndarray) -> RateFit:
    """Fit error ~ C eps^slope on the valid rows.

    Raises:
        InsufficientPoints: If fewer than 3 finite positive errors remain
    """
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    finite = np.isfinite(errors)
    if finite.sum() >= 3 and np.all(errors[finite] < DEGENERATE_FLOOR):
        return RateFit(slope=float("nan"), intercept=float("nan"), stderr=float("nan"),
                       residual=float("nan"), n_points=int(finite.sum()), degenerate=True)
    valid = finite & (errors > 0.0)
    if valid.sum() < 3:
        raise InsufficientPoints(f"need at least 3 valid rows for a rate fit, got {int(valid.sum())}")
    order = np.argsort(-eps[valid])
    x = np.log(eps[valid][order])
    y = np.log(errors[valid][order])
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    pairwise = [float((y[k] - y[k + 1]) / (x[k] - x[k + 1])) for k in range(len(x) - 1)]
    return RateFit(slope=float(fit.slope), intercept=float(fit.intercept), stderr=float(fit.stderr),
                   residual=float(np.sqrt(np.mean(resid ** 2))), n_points=int(valid.sum()),
                   pairwise=pairwise)


def law_beta(eps: np.ndarray, n: int) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if n == 3:
        return eps ** (5.0 / 6.0)
    return eps * np.log(1.0 / eps + 1.0) ** 2


def reference_laws(n: int) -> Dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Predicted error laws by name."""
    return {
        "beta": lambda e: law_beta(e, n),
        "sqrt_eps": lambda e: np.sqrt(np.asarray(e, dtype=float)),
        "eps_log2": lambda e: np.asarray(e, dtype=float) * np.log(1.0 / np.asarray(e, dtype=float) + 1.0) ** 2,
    }


def expected_laws(mu0: float) -> Dict[str, str]:
    """Reference law each error column is compared against."""
    l2 = "beta" if mu0 > 0.0 else "eps_log2"
    return {
        "L2": l2,
        "H1": "sqrt_eps",
        "L2_corrected_twoscale": l2,
        "H1_corrected_twoscale": "sqrt_eps",
        "H1_corrected_neumann": "eps_log2" if mu0 == 0.0 else "sqrt_eps",
        "L2_tilde": l2,
    }


def plan_sweep(model: MaterialModel, sim: SimulationConfig, sweep: SweepConfig) -> pd.DataFrame:
    """Planned rows without running anything (the dry run)."""
    n = model.dimension
    tau = sweep_tau(model, sim, sweep)
    rows = []
    for eps in sweep.eps_list:
        N = sweep.cells_for(eps, n)
        rows.append({"eps": eps, "h": 1.0 / N, "N": N, "tau": tau,
                     "steps": int(np.ceil(sim.T / tau - 1e-9)) if sim.T > 0 else 0,
                     "est_memory_mb": estimate_grid_memory(n, N, model.mu0)})
    return pd.DataFrame(rows)


def sweep_tau(model: MaterialModel, sim: SimulationConfig, sweep: SweepConfig) -> float:
    """One time step shared by every row and by the homogenized run."""
    if sim.tau is not None:
        return sim.tau
    N = sweep.cells_for(max(sweep.eps_list), model.dimension)
    h = 1.0 / N
    return min(h * h / model.a_max, 1e-3)


def _row_config(sim: SimulationConfig, eps: float, N: int, tau: float) -> SimulationConfig:
    return SimulationConfig(**{**sim.model_dump(), "eps": eps, "N": N, "tau": tau})


def run_row(model: MaterialModel, cells: CellSolutions, hom: HomogenizedModel,
            m0_final: Optional[MagnetizationField], eps: float, N: int, sim: SimulationConfig,
            tau: float, profile: str, zeeman_term: str) -> Dict[str, Any]:
    """Run one eps and measure every error at t = T.

    Without a shared ``m0_final`` the homogenized problem is rerun on the row's own grid.

    Returns:
        Dict with ``row`` (report columns), ``timing`` and ``diagnostics``
    """
    start = time.perf_counter()
    grid = Grid(model.dimension, N)
    config = _row_config(sim, eps, N, tau)
    init0, init_eps, init_diag = make_initial_data(profile, model, eps, grid, cells=cells, hom=hom)
    if m0_final is None:
        hom_config = _row_config(sim, 0.0, N, tau)
        m0_final = run(init0, build_hom_system(hom, grid), hom_config, tau=tau).final
    system = build_eps_system(model, eps, grid)
    traj = run(init_eps, system, config, tau=tau)
    m_eps = traj.final.values

    phi, phi_diag = solve_neumann_phi(model, hom, eps, grid, tol=sim.cg_tol,
                                      maxiter_factor=sim.cg_maxiter_factor, op=system.op)
    hom_kernel = build_kernel(m0_final.grid) if hom.mu0 > 0.0 else None
    bundle = build_correctors(m0_final, cells, hom, model, eps, grid, phi, kernel=hom_kernel,
                              zeeman_term=zeeman_term)
    approx = build_approximations(m0_final, bundle)

    plain = norms(m_eps - bundle.m0, grid)
    twoscale = norms(m_eps - approx["twoscale_corrected"], grid)
    neumann = norms(m_eps - approx["neumann_corrected"], grid)
    row = {
        "eps": eps, "h": 1.0 / N, "N": N, "status": "ok",
        "L2": plain["L2"], "H1": plain["H1"],
        "L2_corrected_twoscale": twoscale["L2"], "H1_corrected_twoscale": twoscale["H1"],
        "H1_corrected_neumann": neumann["H1"],
        "L2_tilde": grid.l2_norm(m_eps - approx["tilde"]),
        "L2_tilde_literal": grid.l2_norm(m_eps - approx["tilde_literal"]),
        "L2_tilde_fluctuation": grid.l2_norm(m_eps - approx["tilde_fluctuation"]),
    }
    diagnostics = {
        "eps": eps,
        **corrector_identity_defects(bundle),
        **phi_diag,
        "initial_l2_deviation": init_diag.get("l2_deviation"),
        "surrogate_residual": init_diag.get("surrogate_residual"),
        "energy_violations": len(traj.diagnostics["energy_violations"]),
        "max_renormalization_defect": traj.diagnostics["max_renormalization_defect"],
    }
    timing = {"eps": eps, "N": N, "steps": traj.diagnostics["steps"],
              "inner_iterations": int(traj.energy_log["inner_iterations"].sum()),
              "runtime_s": time.perf_counter() - start}
    return {"row": row, "timing": timing, "diagnostics": diagnostics}


def _safe_row(*args) -> Dict[str, Any]:
    eps, N = args[4], args[5]
    try:
        return run_row(*args)
    except HomomagError as e:
        row = {"eps": eps, "h": 1.0 / N, "N": N, "status": f"failed: {type(e).__name__}"}
        row.update({col: float("nan") for col in ERROR_COLUMNS})
        return {"row": row, "timing": {"eps": eps, "N": N, "steps": 0, "inner_iterations": 0,
                                       "runtime_s": 0.0},
                "diagnostics": {"eps": eps, "error": str(e)}}


def _decay_violations(rows: pd.DataFrame, column: str) -> List[float]:
    values = rows[column].to_numpy()
    bad = []
    for k in range(1, len(values)):
        if np.isfinite(values[k]) and np.isfinite(values[k - 1]) \
                and values[k] > (1.0 + DECAY_SLACK) * values[k - 1] and values[k - 1] > DEGENERATE_FLOOR:
            bad.append(float(rows["eps"].iloc[k]))
    return bad


def run_sweep(model: MaterialModel, sim: SimulationConfig, sweep: SweepConfig,
              N_cell: int = 64, cell_tol: float = CELL_TOL,
              homogenized: Optional[Tuple[CellSolutions, HomogenizedModel]] = None) -> ConvergenceReport:
    """Homogenize, run m0 once, then every eps row, and fit the rates.

    Rows are independent and may run in parallel; their order in the report
    follows eps (decreasing), never completion.
    """
    n = model.dimension
    if homogenized is None:
        cells, hom, cell_diag = homogenize(model, N_cell, tol=cell_tol)
    else:
        cells, hom = homogenized
        cell_diag = {}
    tau = sweep_tau(model, sim, sweep)

    hom_grid = Grid(n, sweep.resolved_N_hom(n))
    m0_final = None
    hom_violations = 0
    if sweep.m0_grid == "shared":
        m0_init, _, _ = make_initial_data(sweep.profile, model, 0.0, hom_grid)
        hom_traj = run(m0_init, build_hom_system(hom, hom_grid), _row_config(sim, 0.0, hom_grid.N, tau), tau=tau)
        m0_final = hom_traj.final
        hom_violations = len(hom_traj.diagnostics["energy_violations"])

    arguments = [(model, cells, hom, m0_final, eps, sweep.cells_for(eps, n), sim, tau,
                  sweep.profile, sweep.zeeman_term) for eps in sweep.eps_list]
    results = parallel_map(_safe_row, arguments, n_jobs=sweep.workers)

    rows = pd.DataFrame([r["row"] for r in results], columns=REPORT_COLUMNS)
    timings = pd.DataFrame([r["timing"] for r in results])
    for r in results:
        if r["row"]["status"] != "ok":
            warnings.warn(f"sweep row eps = {r['row']['eps']} {r['row']['status']} "
                          f"({r['diagnostics'].get('error', '')})")

    laws = expected_laws(model.mu0)
    law_fns = reference_laws(n)
    eps_arr = rows["eps"].to_numpy()
    fits: Dict[str, RateFit] = {}
    for column in ERROR_COLUMNS:
        try:
            fits[column] = fit_rate(eps_arr, rows[column].to_numpy())
        except InsufficientPoints as e:
            warnings.warn(f"no rate for {column}: {e}")
    law_slopes = {}
    if len(eps_arr) >= 3:
        law_slopes = {name: fit_rate(eps_arr, fn(eps_arr)).slope for name, fn in law_fns.items()}

    decay = {column: _decay_violations(rows, column) for column in ("L2", "H1", "H1_corrected_neumann")}
    for column, bad in decay.items():
        if bad:
            warnings.warn(f"{column} error does not decay monotonically at eps = {bad}")
    ordering = []
    if model.mu0 == 0.0:
        ok = rows["status"] == "ok"
        worse = rows[ok & (rows["H1_corrected_neumann"] > rows["H1"])]
        ordering = [float(e) for e in worse["eps"]]
        if ordering:
            warnings.warn(f"corrected H1 error exceeds the uncorrected one at eps = {ordering}")
    flags = {
        "degenerate": bool(all(f.degenerate for f in fits.values())) if fits else False,
        "decay_violations": decay,
        "corrected_worse_than_uncorrected": ordering,
        "failed_rows": [float(e) for e in rows.loc[rows["status"] != "ok", "eps"]],
    }

    diagnostics: Dict[str, Any] = {
        "tau": tau,
        "m0_grid": sweep.m0_grid,
        "N_hom": hom_grid.N if m0_final is not None else None,
        "hom_energy_violations": hom_violations,
        "rows": [r["diagnostics"] for r in results],
        "cell": {k: v for k, v in cell_diag.items() if k in ("a0_asymmetry", "H_d_symmetry_defect")},
    }
    if sweep.spot_check:
        diagnostics["spot_check"] = spot_check(model, cells, hom, m0_final, sim, sweep, tau, rows)
    return ConvergenceReport(rows=rows, timings=timings, fits=fits, laws=laws, law_slopes=law_slopes,
                             flags=flags, diagnostics=diagnostics, hom=hom)


def spot_check(model: MaterialModel, cells: CellSolutions, hom: HomogenizedModel,
               m0_final: MagnetizationField, sim: SimulationConfig, sweep: SweepConfig,
               tau: float, rows: pd.DataFrame) -> Dict[str, float]:
    """Re-run the largest eps with h halved; a small change means h is not the dominant error."""
    eps = max(sweep.eps_list)
    N = 2 * sweep.cells_for(eps, model.dimension)
    refined = _safe_row(model, cells, hom, m0_final, eps, N, sim, tau, sweep.profile, sweep.zeeman_term)
    base = float(rows.loc[rows["eps"] == eps, "L2"].iloc[0])
    fine = float(refined["row"]["L2"])
    change = abs(fine - base) / base if base > 0.0 else float("nan")
    return {"eps": eps, "N": N, "L2": base, "L2_refined": fine, "relative_change": change}

