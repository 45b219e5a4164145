"""Periodic cell problems and the homogenized model."""

from typing import Any, Dict, List, Optional, Tuple, Union
import warnings
import numpy as np
from pydantic import BaseModel, Field

from .grid import (DivFormOperator, Grid, centered_gradient, face_average,
                   face_difference, face_divergence, faces_to_cells, second_difference)
from .material import CoefficientSamples, MaterialModel, evaluate_on_cell_grid
from .solvers import solve_periodic_poisson, solve_singular

CELL_TOL = 1e-12


class CellSolutions(BaseModel):
    """All Y-periodic cell fields on one periodic grid.

    chi: (n, N...), theta: (n, n, N...), kappa, rho, U_tilde: (N...),
    Lambda: (n, n, N...), H_d_cell: (N..., n, n).
    """

    grid: Grid
    chi: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    rho: np.ndarray
    Lambda: np.ndarray
    U_tilde: np.ndarray
    H_d_cell: np.ndarray

    model_config = {"arbitrary_types_allowed": True}

    def fields(self) -> Dict[str, np.ndarray]:
        """Flat name -> array mapping for the binary container."""
        n = self.grid.n
        out = {f"chi_{j + 1}": self.chi[j] for j in range(n)}
        for i in range(n):
            for j in range(n):
                out[f"theta_{i + 1}{j + 1}"] = self.theta[i, j]
                out[f"Lambda_{i + 1}{j + 1}"] = self.Lambda[i, j]
                out[f"H_d_{i + 1}{j + 1}"] = self.H_d_cell[..., i, j]
        out["kappa"] = self.kappa
        out["rho"] = self.rho
        out["U_tilde"] = self.U_tilde
        return out

    @classmethod
    def from_fields(cls, grid: Grid, fields: Dict[str, np.ndarray]) -> "CellSolutions":
        n = grid.n
        idx = [(i, j) for i in range(n) for j in range(n)]
        chi = np.stack([fields[f"chi_{j + 1}"] for j in range(n)])
        theta = np.empty((n, n) + grid.shape)
        Lam = np.empty((n, n) + grid.shape)
        H = np.empty(grid.shape + (n, n))
        for i, j in idx:
            theta[i, j] = fields[f"theta_{i + 1}{j + 1}"]
            Lam[i, j] = fields[f"Lambda_{i + 1}{j + 1}"]
            H[..., i, j] = fields[f"H_d_{i + 1}{j + 1}"]
        return cls(grid=grid, chi=chi, theta=theta, kappa=fields["kappa"], rho=fields["rho"],
                   Lambda=Lam, U_tilde=fields["U_tilde"], H_d_cell=H)


class HomogenizedModel(BaseModel):
    """Constant effective coefficients plus the unchanged physical constants."""

    dimension: int
    a0: List[List[float]] = Field(description="Homogenized exchange tensor")
    M0: float = Field(description="Mean saturation magnetization")
    K0: float = Field(description="Mean anisotropy")
    H_d0: List[List[float]] = Field(description="Homogenized microscale demag matrix")
    u: List[float]
    alpha: float
    mu0: float
    h_a: List[float]

    @property
    def a0_matrix(self) -> np.ndarray:
        return np.asarray(self.a0, dtype=float)

    @property
    def H_d0_matrix(self) -> np.ndarray:
        return np.asarray(self.H_d0, dtype=float)

    def summary(self) -> str:
        """Human-readable summary of the effective coefficients."""
        lines = [f"dimension = {self.dimension}"]
        for i, row in enumerate(self.a0):
            for j, v in enumerate(row):
                lines.append(f"a0_{i + 1}{j + 1} = {v:.12e}")
        lines.append(f"M0 = {self.M0:.12e}")
        lines.append(f"K0 = {self.K0:.12e}")
        for i, row in enumerate(self.H_d0):
            for j, v in enumerate(row):
                lines.append(f"H_d0_{i + 1}{j + 1} = {v:.12e}")
        return "\n".join(lines) + "\n"


def _samples_for(model: MaterialModel, N_cell: int,
                 samples: Optional[CoefficientSamples]) -> CoefficientSamples:
    if samples is not None:
        return samples
    return evaluate_on_cell_grid(model, N_cell)


def solve_periodic_divform(coeff: Union[CoefficientSamples, DivFormOperator], rhs: np.ndarray,
                           tol: float = CELL_TOL, maxiter_factor: int = 20,
                           label: str = "cell") -> Tuple[np.ndarray, Dict[str, Any]]:
    """Zero-mean Y-periodic solution of div(a grad u) = rhs.

    Args:
        coeff: Sampled coefficients or an assembled periodic operator
        rhs: Right-hand side on the cell grid
        tol: Relative residual target
        maxiter_factor: Iteration cap is maxiter_factor * N_cell
        label: Name used in diagnostics and errors

    Returns:
        Tuple of (u, info) with iterations, residual and rhs mean

    Raises:
        CompatibilityViolated: If |mean(rhs)| > 1e-10 ||rhs||
        NoConvergence: If the iteration cap is reached
    """
    op = coeff.operator() if isinstance(coeff, CoefficientSamples) else coeff
    if not op.grid.periodic:
        raise ValueError("solve_periodic_divform needs a periodic grid")
    return solve_singular(op, rhs, tol=tol, maxiter_factor=maxiter_factor, label=label)


def _unit_flux(samples: CoefficientSamples, j: int) -> np.ndarray:
    """-div(a e_j) in the discrete flux form, the right-hand side of the chi_j problem."""
    grid = samples.grid
    rhs = -face_divergence(samples.a_faces[j], grid, j)
    for i in range(grid.n):
        if i != j:
            rhs = rhs - centered_gradient(samples.a[..., i, j], grid, i)
    return rhs


def solve_chi(model: MaterialModel, N_cell: int, samples: Optional[CoefficientSamples] = None,
              tol: float = CELL_TOL, op: Optional[DivFormOperator] = None
              ) -> Tuple[np.ndarray, List[Dict[str, Any]]]:
    """First-order cell functions chi_j: div(a grad chi_j) = -sum_i d_i a_ij, zero mean.

    Returns:
        Tuple of (chi with shape (n, N...), per-solve info)
    """
    samples = _samples_for(model, N_cell, samples)
    op = op or samples.operator()
    chi, infos = [], []
    for j in range(samples.grid.n):
        u, info = solve_periodic_divform(op, _unit_flux(samples, j), tol=tol, label=f"chi_{j + 1}")
        chi.append(u)
        infos.append(info)
    return np.stack(chi), infos


def _corrected_flux(samples: CoefficientSamples, chi_j: np.ndarray, i: int, j: int) -> np.ndarray:
    """Cell field of (a (e_j + grad chi_j))_i."""
    grid = samples.grid
    face = samples.a_faces[i] * (face_difference(chi_j, grid, i) + (1.0 if i == j else 0.0))
    out = faces_to_cells(face, grid, i)
    for k in range(grid.n):
        if k != i:
            out = out + samples.a[..., i, k] * (centered_gradient(chi_j, grid, k) + (1.0 if k == j else 0.0))
    return out


def homogenized_tensor(model: MaterialModel, chi: np.ndarray,
                       samples: Optional[CoefficientSamples] = None) -> Tuple[np.ndarray, Dict[str, float]]:
    """a0_ij = int_Y (a_ij + sum_k a_ik d_k chi_j) dy, symmetrized.

    Returns:
        Tuple of (a0, diagnostics with the asymmetry defect of the raw tensor)
    """
    samples = _samples_for(model, chi.shape[-1], samples)
    n = samples.grid.n
    raw = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            raw[i, j] = float(samples.grid.mean(_corrected_flux(samples, chi[j], i, j)))
    a0 = 0.5 * (raw + raw.T)
    defect = float(np.max(np.abs(raw - raw.T))) if n > 1 else 0.0
    if defect > 1e-8:
        warnings.warn(f"homogenized tensor asymmetry defect {defect:.3e}")
    return a0, {"a0_asymmetry": defect}


def homogenized_scalars(model: MaterialModel, N_cell: int = 64,
                        samples: Optional[CoefficientSamples] = None) -> Tuple[float, float]:
    """Grid means M0 of M_s and K0 of K."""
    samples = _samples_for(model, N_cell, samples)
    return float(samples.grid.mean(samples.M_s)), float(samples.grid.mean(samples.K))


def solve_cell_demag(model: MaterialModel, N_cell: int,
                     samples: Optional[CoefficientSamples] = None
                     ) -> Tuple[np.ndarray, np.ndarray, Dict[str, float]]:
    """Periodic potential with Laplacian -(M_s - M0) and its symmetrized Hessian.

    Returns:
        Tuple of (U_tilde, H_d_cell with shape (N..., n, n), diagnostics)
    """
    samples = _samples_for(model, N_cell, samples)
    grid = samples.grid
    n = grid.n
    M0 = float(grid.mean(samples.M_s))
    U = solve_periodic_poisson(-(samples.M_s - M0), grid)
    H = np.empty(grid.shape + (n, n))
    for i in range(n):
        H[..., i, i] = second_difference(U, grid, i)
        for j in range(n):
            if j != i:
                H[..., i, j] = centered_gradient(centered_gradient(U, grid, i), grid, j)
    defect = float(np.max(np.abs(H - np.swapaxes(H, -1, -2))))
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    trace = float(grid.mean(np.trace(H, axis1=-2, axis2=-1)))
    return U, H, {"H_d_symmetry_defect": defect, "H_d_trace_integral": trace}


def homogenized_demag_matrix(model: MaterialModel, H_d_cell: np.ndarray,
                             samples: Optional[CoefficientSamples] = None) -> np.ndarray:
    """H_d0 = int_Y M_s(y) H_d_cell(y) dy, symmetrized."""
    samples = _samples_for(model, H_d_cell.shape[0], samples)
    H0 = samples.grid.mean(samples.M_s[..., None, None] * H_d_cell)
    return 0.5 * (H0 + H0.T)


def solve_second_order_cells(model: MaterialModel, chi: np.ndarray, a0: np.ndarray,
                             M0: float, K0: float, H_d_cell: np.ndarray, H_d0: np.ndarray,
                             samples: Optional[CoefficientSamples] = None, tol: float = CELL_TOL,
                             op: Optional[DivFormOperator] = None
                             ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, Dict[str, Any]]:
    """theta_ij, kappa, rho and Lambda from the homogenized model.

    Every right-hand side passes the compatibility check only if a0, M0, K0
    and H_d0 are consistent with the cell data.

    Returns:
        Tuple of (theta, kappa, rho, Lambda, diagnostics with rhs means)

    Raises:
        CompatibilityViolated: If the homogenized model is inconsistent
    """
    samples = _samples_for(model, chi.shape[-1], samples)
    grid = samples.grid
    n = grid.n
    op = op or samples.operator()
    rhs_means: Dict[str, float] = {}
    iterations: Dict[str, int] = {}

    def solve(rhs, label):
        u, info = solve_periodic_divform(op, rhs, tol=tol, label=label)
        rhs_means[label] = float(np.mean(rhs))
        iterations[label] = info["iterations"]
        return u

    theta = np.empty((n, n) + grid.shape)
    for i in range(n):
        for j in range(n):
            rhs = a0[i, j] - _corrected_flux(samples, chi[j], i, j)
            rhs = rhs - face_divergence(samples.a_faces[i] * face_average(chi[j], grid, i), grid, i)
            for k in range(n):
                if k != i:
                    rhs = rhs - centered_gradient(samples.a[..., i, k] * chi[j], grid, k)
            theta[i, j] = solve(rhs, f"theta_{i + 1}{j + 1}")

    kappa = solve(samples.K - K0, "kappa")
    rho = solve(samples.M_s - M0, "rho")
    Lam = np.empty((n, n) + grid.shape)
    for i in range(n):
        for j in range(n):
            Lam[i, j] = solve(samples.M_s * H_d_cell[..., i, j] - H_d0[i, j], f"Lambda_{i + 1}{j + 1}")
    return theta, kappa, rho, Lam, {"second_order_rhs_means": rhs_means, "iterations": iterations}


def homogenize(model: MaterialModel, N_cell: int, tol: float = CELL_TOL
               ) -> Tuple[CellSolutions, HomogenizedModel, Dict[str, Any]]:
    """Solve every cell problem and assemble the homogenized model.

    Args:
        model: Material model
        N_cell: Cell resolution per axis (power of two >= 8)
        tol: Relative residual target of the cell solves

    Returns:
        Tuple of (CellSolutions, HomogenizedModel, diagnostics)
    """
    samples = evaluate_on_cell_grid(model, N_cell)
    op = samples.operator()
    chi, chi_info = solve_chi(model, N_cell, samples=samples, tol=tol, op=op)
    a0, a0_diag = homogenized_tensor(model, chi, samples=samples)
    M0, K0 = homogenized_scalars(model, N_cell, samples=samples)
    U, H, demag_diag = solve_cell_demag(model, N_cell, samples=samples)
    H0 = homogenized_demag_matrix(model, H, samples=samples)
    theta, kappa, rho, Lam, second = solve_second_order_cells(
        model, chi, a0, M0, K0, H, H0, samples=samples, tol=tol, op=op)

    cells = CellSolutions(grid=samples.grid, chi=chi, theta=theta, kappa=kappa, rho=rho,
                          Lambda=Lam, U_tilde=U, H_d_cell=H)
    hom = HomogenizedModel(dimension=model.dimension, a0=a0.tolist(), M0=M0, K0=K0,
                           H_d0=H0.tolist(), u=list(model.u), alpha=model.alpha,
                           mu0=model.mu0, h_a=list(model.h_a))
    diagnostics = {
        "N_cell": N_cell,
        "chi_residuals": [info["residual"] for info in chi_info],
        "chi_iterations": [info["iterations"] for info in chi_info],
        **a0_diag,
        **demag_diag,
        **second,
    }
    return cells, hom, diagnostics
