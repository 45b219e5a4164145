"""Free-space stray field by zero-padded FFT convolution with the Newtonian kernel."""

from typing import Union
import numpy as np
from scipy import fft

from .errors import ConfigValidationError, GridError, KernelError
from .grid import Grid

# mean of ln|y| over the unit square centred at the origin
_LOG_CELL_MEAN = 0.5 * np.log(2.0) + 0.25 * np.pi - 1.5 - np.log(2.0)
# mean of 1/|y| over the unit cube centred at the origin
_INV_CELL_MEAN = 2.0 * (3.0 * np.arcsinh(1.0 / np.sqrt(2.0)) - 0.25 * np.pi)


def fundamental_solution(r: np.ndarray, n: int) -> np.ndarray:
    """Fundamental solution of the n-D Laplacian (r > 0)."""
    if n == 2:
        return np.log(r) / (2.0 * np.pi)
    if n == 3:
        return -1.0 / (4.0 * np.pi * r)
    raise ConfigValidationError(f"no stray-field kernel for n = {n}")


def self_cell_value(h: float, n: int) -> float:
    """Cell average of the fundamental solution over the cell containing the singularity."""
    if n == 2:
        return (np.log(h) + _LOG_CELL_MEAN) / (2.0 * np.pi)
    return -(_INV_CELL_MEAN / h) / (4.0 * np.pi)


class DemagKernel:
    """Tabulated Green function on a zero-padded box.

    The domain grid is extended by one ring of cells so that the centred
    divergence sees the jump of the zero extension, then padded to
    ``pad_factor`` times the extended size per axis.
    """

    def __init__(self, grid: Grid, pad_factor: int = 2):
        if grid.periodic:
            raise GridError("stray field is defined on Neumann (free-space) grids")
        if pad_factor < 2:
            raise KernelError("pad_factor >= 2 is required for an aperiodic convolution")
        self.grid = grid
        self.n = grid.n
        self.extended = grid.N + 2
        self.padded = pad_factor * self.extended
        self.pad_factor = pad_factor

        P = self.padded
        idx = np.arange(P)
        offsets = np.where(idx < P // 2, idx, idx - P).astype(float)
        mesh = np.meshgrid(*([offsets] * self.n), indexing="ij")
        r = grid.h * np.sqrt(sum(d * d for d in mesh))
        values = np.empty_like(r)
        inside = r > 0.0
        values[inside] = fundamental_solution(r[inside], self.n)
        values[~inside] = self_cell_value(grid.h, self.n)
        self.values = values
        self.spectrum = fft.rfftn(values, workers=1)

    def convolve(self, rho_ext: np.ndarray) -> np.ndarray:
        """Potential U = sum_l Gamma(x_k - x_l) rho_l h^n on the extended grid."""
        shape = (self.padded,) * self.n
        rho_hat = fft.rfftn(rho_ext, s=shape, workers=1)
        U = fft.irfftn(rho_hat * self.spectrum, s=shape, workers=1)
        sl = tuple(slice(0, self.extended) for _ in range(self.n))
        return self.grid.cell_volume * U[sl]


def build_kernel(grid: Grid, n: int = None, pad_factor: int = 2) -> DemagKernel:
    """Build the demag kernel once per grid.

    Raises:
        ConfigValidationError: For n = 1 (the stray-field model needs n in {2, 3})
        GridError: If n does not match the grid
    """
    n = grid.n if n is None else n
    if n == 1:
        raise ConfigValidationError("mu0 > 0 requires n != 1: no stray field in one dimension",
                                    constraint="n != 1")
    if n != grid.n:
        raise GridError(f"kernel dimension {n} does not match grid dimension {grid.n}")
    return DemagKernel(grid, pad_factor=pad_factor)


def stray_field(m: np.ndarray, M_weight: Union[float, np.ndarray], kernel: DemagKernel) -> np.ndarray:
    """h_d = grad U with Laplacian U = -div(M_weight m 1_Omega).

    Only the first n components of m source the field; the returned
    components n..2 are zero.

    Args:
        m: Field of shape (N..., 3)
        M_weight: Scalar or array of shape (N...)
        kernel: Kernel built for the grid of m

    Returns:
        Stray field of shape (N..., 3)
    """
    grid = kernel.grid
    if m.shape != grid.shape + (3,):
        raise GridError(f"field shape {m.shape} does not match kernel grid {grid!r}")
    n, h = grid.n, grid.h
    weight = np.asarray(M_weight, dtype=float)
    if weight.ndim:
        grid.check(weight, name="M_weight")
        weight = weight[..., None]
    Mm = weight * m[..., :n]

    inner = tuple(slice(1, -1) for _ in range(n))
    ext = np.zeros((kernel.extended,) * n + (n,))
    ext[inner] = Mm
    div = np.zeros((kernel.extended,) * n)
    for i in range(n):
        div += (np.roll(ext[..., i], -1, axis=i) - np.roll(ext[..., i], 1, axis=i)) / (2.0 * h)
    U = kernel.convolve(-div)

    out = np.zeros(grid.shape + (3,))
    for i in range(n):
        sl_hi = list(inner)
        sl_lo = list(inner)
        sl_hi[i] = slice(2, None)
        sl_lo[i] = slice(0, -2)
        out[..., i] = (U[tuple(sl_hi)] - U[tuple(sl_lo)]) / (2.0 * h)
    return out


def magnetostatic_self_energy(m: np.ndarray, M_weight: Union[float, np.ndarray],
                              kernel: DemagKernel) -> float:
    """-int h_d[M m] . M m dx, nonnegative up to rounding."""
    hd = stray_field(m, M_weight, kernel)
    weight = np.asarray(M_weight, dtype=float)
    Mm = (weight[..., None] if weight.ndim else weight) * m
    return float(-kernel.grid.integrate(np.sum(hd * Mm, axis=-1)))
