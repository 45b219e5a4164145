"""Grid transfers: cubic tensor splines and cell averaging."""

from typing import Optional, Sequence
import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import TransferError
from .grid import Grid


def _spline_along(values: np.ndarray, src: np.ndarray, tgt: np.ndarray, axis: int,
                  nu: int = 0, periodic: bool = False) -> np.ndarray:
    if periodic:
        first = np.take(values, [0], axis=axis)
        values = np.concatenate([values, first], axis=axis)
        src = np.append(src, src[0] + 1.0)
        spline = make_interp_spline(src, values, k=3, axis=axis, bc_type="periodic")
        tgt = np.mod(tgt - src[0], 1.0) + src[0]
    else:
        spline = make_interp_spline(src, values, k=3, axis=axis)
    if nu:
        spline = spline.derivative(nu)
    return spline(tgt)


def tensor_spline(values: np.ndarray, src: Sequence[np.ndarray], tgt: Sequence[np.ndarray],
                  orders: Optional[Sequence[int]] = None, periodic: bool = False) -> np.ndarray:
    """Evaluate a cubic tensor spline (or one of its partial derivatives) on a product grid.

    Args:
        values: Samples with the n spatial axes first, any trailing axes
        src: 1D source coordinates per axis
        tgt: 1D target coordinates per axis
        orders: Derivative order per axis (default all zero)
        periodic: Treat the samples as 1-periodic (cell functions)

    Returns:
        Values on the target product grid, trailing axes kept
    """
    orders = orders or [0] * len(src)
    out = values
    for axis, (s, t, nu) in enumerate(zip(src, tgt, orders)):
        out = _spline_along(out, s, t, axis, nu=nu, periodic=periodic)
    return out


def grid_to_grid(values: np.ndarray, source: Grid, target: Grid,
                 orders: Optional[Sequence[int]] = None) -> np.ndarray:
    """Spline transfer between two Neumann grids of [0, 1]^n (not-a-knot ends)."""
    src = [source.centers()] * source.n
    tgt = [target.centers()] * target.n
    return tensor_spline(values, src, tgt, orders=orders)


def cell_to_domain(field: np.ndarray, cell_grid: Grid, target: Grid, eps: float) -> np.ndarray:
    """Evaluate a Y-periodic cell field at y = frac(x / eps) on every target cell centre."""
    src = [cell_grid.centers()] * cell_grid.n
    y = np.mod(target.centers() / eps, 1.0)
    return tensor_spline(field, src, [y] * target.n, periodic=True)


def averaging_matrix(N_source: int, N_target: int) -> np.ndarray:
    """Weights of fine cells inside each coarse cell of [0, 1]; rows sum to one."""
    fine = np.linspace(0.0, 1.0, N_source + 1)
    coarse = np.linspace(0.0, 1.0, N_target + 1)
    lo = np.maximum(coarse[:-1, None], fine[None, :-1])
    hi = np.minimum(coarse[1:, None], fine[None, 1:])
    return np.clip(hi - lo, 0.0, None) * N_target


def cell_average(values: np.ndarray, source: Grid, target: Grid) -> np.ndarray:
    """Restrict a cell field to a coarser grid by exact overlap averaging."""
    weights = averaging_matrix(source.N, target.N)
    out = values
    for axis in range(source.n):
        out = np.moveaxis(np.tensordot(weights, out, axes=([1], [axis])), 0, axis)
    return out


def transfer(values: np.ndarray, source: Grid, target: Grid) -> np.ndarray:
    """Carry a cell field between two uniform grids of the same domain.

    Coarsening averages over cells; refining evaluates cubic tensor splines
    at the target centres (periodic for cell grids).

    Raises:
        TransferError: If the grids do not describe the same domain
    """
    if source.n != target.n or source.periodic != target.periodic:
        raise TransferError(f"cannot transfer from {source!r} to {target!r}")
    if source == target:
        return values.copy()
    if source.N > target.N:
        return cell_average(values, source, target)
    if source.periodic:
        return tensor_spline(values, [source.centers()] * source.n, [target.centers()] * target.n,
                             periodic=True)
    return grid_to_grid(values, source, target)


def transfer_to_points(values: np.ndarray, source: Grid, coords: Sequence[np.ndarray]) -> np.ndarray:
    """Spline a Neumann-grid field onto a product of 1D coordinates inside [0, 1].

    Raises:
        TransferError: If a coordinate lies outside the domain
    """
    for c in coords:
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise TransferError("target coordinates leave the domain [0, 1]")
    return tensor_spline(values, [source.centers()] * source.n, coords)
