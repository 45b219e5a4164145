"""Preconditioned conjugate gradients for flux-form operators."""

from typing import Any, Callable, Dict, Optional, Tuple
import numpy as np
from scipy import fft

from .errors import CompatibilityViolated, NoConvergence
from .grid import DivFormOperator, Grid, laplacian_symbol


def _dot(u: np.ndarray, v: np.ndarray) -> float:
    # np.sum is pairwise and fixed-order, so results do not depend on threads
    return float(np.sum(u * v))


class SpectralPreconditioner:
    """Exact inverse of (shift I + scale * sum_i abar_i (-Delta_i)).

    Diagonalised by the FFT on periodic grids and by the DCT-II on Neumann
    grids. With ``shift == 0`` the zero mode is dropped.
    """

    def __init__(self, grid: Grid, abar: np.ndarray, shift: float = 0.0, scale: float = 1.0):
        self.grid = grid
        lams = laplacian_symbol(grid)
        symbol = np.full(grid.shape, float(shift))
        for i, lam in enumerate(lams):
            shape = [1] * grid.n
            shape[i] = grid.N
            symbol = symbol + scale * float(abar[i]) * lam.reshape(shape)
        with np.errstate(divide="ignore"):
            inv = np.where(symbol > 0.0, 1.0 / np.where(symbol > 0.0, symbol, 1.0), 0.0)
        self.inverse_symbol = inv
        self.singular = shift == 0.0

    def __call__(self, r: np.ndarray) -> np.ndarray:
        axes = self.grid.axes
        if self.grid.periodic:
            rh = fft.fftn(r, axes=axes, workers=1)
            return np.real(fft.ifftn(rh * self.inverse_symbol, axes=axes, workers=1))
        rh = fft.dctn(r, type=2, axes=axes, norm="ortho", workers=1)
        return fft.idctn(rh * self.inverse_symbol, type=2, axes=axes, norm="ortho", workers=1)


def pcg(apply_A: Callable[[np.ndarray], np.ndarray],
        b: np.ndarray,
        precondition: Callable[[np.ndarray], np.ndarray],
        tol: float = 1e-10,
        maxiter: int = 1000,
        project_mean: bool = False,
        x0: Optional[np.ndarray] = None,
        label: str = "pcg") -> Tuple[np.ndarray, Dict[str, Any]]:
    """Preconditioned conjugate gradients for a symmetric positive (semi)definite A.

    Args:
        apply_A: Matrix-free product with A
        b: Right-hand side, already compatible when A is singular
        precondition: Approximate inverse of A
        tol: Relative residual target ||b - Ax|| <= tol ||b||
        maxiter: Iteration cap
        project_mean: Keep iterates in the zero-mean subspace
        x0: Optional starting guess
        label: Name used in error messages

    Returns:
        Tuple of (solution, info) with iteration count and relative residual

    Raises:
        NoConvergence: If the cap is reached before the tolerance
    """
    b_norm = np.sqrt(_dot(b, b))
    if b_norm == 0.0:
        return np.zeros_like(b), {"iterations": 0, "residual": 0.0}

    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = precondition(r)
    if project_mean:
        z = z - np.mean(z)
    p = z.copy()
    rz = _dot(r, z)
    r_norm = np.sqrt(_dot(r, r))
    iterations = 0

    while r_norm > tol * b_norm:
        if iterations >= maxiter:
            raise NoConvergence(iterations, r_norm / b_norm, label=label)
        Ap = apply_A(p)
        pAp = _dot(p, Ap)
        if pAp <= 0.0:
            raise NoConvergence(iterations, r_norm / b_norm, label=f"{label} (breakdown)")
        step = rz / pAp
        x = x + step * p
        r = r - step * Ap
        r_norm = np.sqrt(_dot(r, r))
        iterations += 1
        if r_norm <= tol * b_norm:
            break
        z = precondition(r)
        if project_mean:
            z = z - np.mean(z)
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    if project_mean:
        x = x - np.mean(x)
    true_residual = b - apply_A(x)
    return x, {"iterations": iterations, "residual": float(np.sqrt(_dot(true_residual, true_residual)) / b_norm)}


def check_compatibility(rhs: np.ndarray, grid: Grid, label: str = "rhs") -> float:
    """Raise CompatibilityViolated unless rhs has (numerically) zero mean."""
    mean = float(np.mean(rhs))
    norm = float(np.sqrt(np.mean(rhs * rhs)))
    if abs(mean) > 1e-10 * norm + 1e-13:
        raise CompatibilityViolated(mean, norm, label=label)
    return mean


def solve_singular(op: DivFormOperator, rhs: np.ndarray, tol: float = 1e-10,
                   maxiter_factor: int = 20, label: str = "divform") -> Tuple[np.ndarray, Dict[str, Any]]:
    """Solve L u = rhs for the zero-mean u (periodic or pure Neumann closure).

    Raises:
        CompatibilityViolated: If rhs has nonzero mean
        NoConvergence: If PCG hits maxiter_factor * N iterations
    """
    grid = op.grid
    grid.check(rhs, name=label)
    mean = check_compatibility(rhs, grid, label=label)
    b = -(rhs - mean)
    pre = SpectralPreconditioner(grid, op.mean_diagonal)
    u, info = pcg(lambda v: -op.apply(v), b, pre, tol=tol,
                  maxiter=maxiter_factor * grid.N, project_mean=True, label=label)
    info["rhs_mean"] = mean
    return u, info


def solve_shifted(op: DivFormOperator, rhs: np.ndarray, scale: float, tol: float = 1e-10,
                  maxiter_factor: int = 20, x0: Optional[np.ndarray] = None,
                  label: str = "implicit") -> Tuple[np.ndarray, Dict[str, Any]]:
    """Solve (I - scale L) u = rhs; nonsingular for scale >= 0."""
    grid = op.grid
    pre = SpectralPreconditioner(grid, op.mean_diagonal, shift=1.0, scale=scale)
    return pcg(lambda v: v - scale * op.apply(v), rhs, pre, tol=tol,
               maxiter=maxiter_factor * grid.N, x0=x0, label=label)


def solve_periodic_poisson(rhs: np.ndarray, grid: Grid) -> np.ndarray:
    """Exact zero-mean inverse of the periodic three-point Laplacian."""
    if not grid.periodic:
        raise ValueError("solve_periodic_poisson needs a periodic grid")
    pre = SpectralPreconditioner(grid, np.ones(grid.n))
    return -pre(rhs - np.mean(rhs))
