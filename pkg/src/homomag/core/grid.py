"""Uniform cell-centred grids and flux-form difference operators."""

from typing import List, Optional, Sequence, Tuple
import numpy as np
import scipy.sparse as sp

from .errors import GridError


class Grid:
    """Cell-centred uniform grid on [0, 1]^n.

    Cell k along an axis has centre (k + 1/2) h. Periodic grids carry N faces
    per line, face k sitting at (k + 1) h between cells k and k + 1 (mod N).
    Neumann grids keep only the N - 1 interior faces; boundary faces carry
    zero flux, which is the discrete co-normal condition.
    """

    def __init__(self, n: int, N: int, periodic: bool = False):
        if n not in (1, 2, 3):
            raise GridError(f"dimension must be 1, 2 or 3, got {n}")
        if N < 2:
            raise GridError(f"need at least 2 cells per axis, got {N}")
        self.n = int(n)
        self.N = int(N)
        self.periodic = bool(periodic)
        self.h = 1.0 / self.N

    def __repr__(self) -> str:
        kind = "periodic" if self.periodic else "neumann"
        return f"Grid(n={self.n}, N={self.N}, {kind})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (self.n, self.N, self.periodic) == (other.n, other.N, other.periodic)

    def __hash__(self) -> int:
        return hash((self.n, self.N, self.periodic))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N ** self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @property
    def n_faces(self) -> int:
        """Faces per grid line."""
        return self.N if self.periodic else self.N - 1

    @property
    def axes(self) -> Tuple[int, ...]:
        return tuple(range(self.n))

    def centers(self) -> np.ndarray:
        """1D cell-centre coordinates."""
        return (np.arange(self.N) + 0.5) * self.h

    def face_coords(self) -> np.ndarray:
        """1D face coordinates along any axis."""
        return (np.arange(self.n_faces) + 1.0) * self.h

    def face_shape(self, axis: int) -> Tuple[int, ...]:
        shape = list(self.shape)
        shape[axis] = self.n_faces
        return tuple(shape)

    def points(self) -> np.ndarray:
        """Cell centres as an array of shape (N, ..., N, n)."""
        c = self.centers()
        mesh = np.meshgrid(*([c] * self.n), indexing="ij")
        return np.stack(mesh, axis=-1)

    def face_points(self, axis: int) -> np.ndarray:
        """Face centres normal to ``axis``, shape face_shape(axis) + (n,)."""
        coords = [self.centers()] * self.n
        coords[axis] = self.face_coords()
        mesh = np.meshgrid(*coords, indexing="ij")
        return np.stack(mesh, axis=-1)

    def center_index(self) -> Tuple[int, ...]:
        return (self.N // 2,) * self.n

    def integrate(self, u: np.ndarray) -> np.ndarray:
        """Midpoint quadrature over the spatial axes; trailing axes are kept."""
        return self.cell_volume * np.sum(u, axis=self.axes)

    def mean(self, u: np.ndarray) -> np.ndarray:
        return np.mean(u, axis=self.axes)

    def l2_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.integrate(np.sum(np.reshape(u * u, self.shape + (-1,)), axis=-1))))

    def check(self, u: np.ndarray, components: Optional[int] = None, name: str = "field") -> None:
        """Raise GridError unless ``u`` is sampled on this grid."""
        expected = self.shape if components is None else self.shape + (components,)
        if u.shape != expected:
            raise GridError(f"{name} has shape {u.shape}, expected {expected} for {self!r}")


def _axis_operator(op1d: sp.spmatrix, grid: Grid, axis: int) -> sp.csr_matrix:
    """Lift a 1D operator to act along ``axis`` of a C-ordered n-D array."""
    before = sp.identity(grid.N ** axis, format="csr")
    after = sp.identity(grid.N ** (grid.n - axis - 1), format="csr")
    return sp.kron(sp.kron(before, op1d), after, format="csr")


def _forward_difference_1d(grid: Grid) -> sp.csr_matrix:
    N, F = grid.N, grid.n_faces
    rows = np.arange(F)
    left = rows
    right = (rows + 1) % N
    data = np.concatenate([-np.ones(F), np.ones(F)]) / grid.h
    return sp.csr_matrix((data, (np.concatenate([rows, rows]), np.concatenate([left, right]))), shape=(F, N))


def _centered_difference_1d(grid: Grid) -> sp.csr_matrix:
    N = grid.N
    k = np.arange(N)
    if grid.periodic:
        plus, minus = (k + 1) % N, (k - 1) % N
    else:
        # mirror ghost cells: u[-1] = u[0], u[N] = u[N-1]
        plus, minus = np.minimum(k + 1, N - 1), np.maximum(k - 1, 0)
    data = np.concatenate([np.ones(N), -np.ones(N)]) / (2.0 * grid.h)
    return sp.csr_matrix((data, (np.concatenate([k, k]), np.concatenate([plus, minus]))), shape=(N, N))


def forward_difference(grid: Grid, axis: int) -> sp.csr_matrix:
    """Cells to faces: (u[k+1] - u[k]) / h."""
    return _axis_operator(_forward_difference_1d(grid), grid, axis)


def centered_difference(grid: Grid, axis: int) -> sp.csr_matrix:
    """Cells to cells: (u[k+1] - u[k-1]) / 2h with mirror ghosts on Neumann grids."""
    return _axis_operator(_centered_difference_1d(grid), grid, axis)


def face_difference(u: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Forward difference of cell data onto the faces of ``axis``."""
    if grid.periodic:
        return (np.roll(u, -1, axis=axis) - u) / grid.h
    return np.diff(u, axis=axis) / grid.h


def face_average(u: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Average of the two cells adjacent to each face."""
    if grid.periodic:
        return 0.5 * (u + np.roll(u, -1, axis=axis))
    lo = np.take(u, np.arange(grid.N - 1), axis=axis)
    hi = np.take(u, np.arange(1, grid.N), axis=axis)
    return 0.5 * (lo + hi)


def faces_to_cells(F: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Average face data back to cells; Neumann boundary faces count as zero."""
    if grid.periodic:
        return 0.5 * (F + np.roll(F, 1, axis=axis))
    pad = [(0, 0)] * F.ndim
    pad[axis] = (1, 1)
    Fp = np.pad(F, pad)
    return 0.5 * (np.take(Fp, np.arange(1, grid.N + 1), axis=axis)
                  + np.take(Fp, np.arange(grid.N), axis=axis))


def face_divergence(F: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Difference of face data back onto cells, the negative adjoint of face_difference."""
    if grid.periodic:
        return (F - np.roll(F, 1, axis=axis)) / grid.h
    pad = [(0, 0)] * F.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(F, pad), axis=axis) / grid.h


def centered_gradient(u: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Second-order cell gradient.

    Periodic grids wrap. Neumann grids use one-sided second-order
    differences in the first and last cell.
    """
    if grid.periodic:
        return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2.0 * grid.h)
    N = grid.N
    if N < 3:
        raise GridError("one-sided gradient closure needs at least 3 cells")
    u = np.moveaxis(u, axis, 0)
    g = np.empty_like(u)
    g[1:-1] = (u[2:] - u[:-2]) / (2.0 * grid.h)
    g[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * grid.h)
    g[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * grid.h)
    return np.moveaxis(g, 0, axis)


def second_difference(u: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Three-point second difference (periodic grids only)."""
    if not grid.periodic:
        raise GridError("second_difference is defined on periodic grids")
    return (np.roll(u, -1, axis=axis) - 2.0 * u + np.roll(u, 1, axis=axis)) / grid.h ** 2


def laplacian_symbol(grid: Grid) -> List[np.ndarray]:
    """Per-axis eigenvalues of the positive 1D second-difference operator.

    FFT ordering on periodic grids, DCT-II ordering on Neumann grids.
    """
    k = np.arange(grid.N)
    if grid.periodic:
        lam = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / grid.N)) / grid.h ** 2
    else:
        lam = (2.0 - 2.0 * np.cos(np.pi * k / grid.N)) / grid.h ** 2
    return [lam] * grid.n


class DivFormOperator:
    """Discrete div(a grad .) in flux form.

    L = -sum_i D_i^T diag(a_ii on faces) D_i - sum_{i != j} C_i^T diag(a_ij) C_j

    L is symmetric negative semidefinite with constants in its kernel. On
    Neumann grids boundary faces carry no flux.
    """

    def __init__(self, grid: Grid, a_faces: Sequence[np.ndarray],
                 a_cells: Optional[np.ndarray] = None):
        n = grid.n
        if len(a_faces) != n:
            raise GridError(f"need {n} face coefficient arrays, got {len(a_faces)}")
        for axis, af in enumerate(a_faces):
            if af.shape != grid.face_shape(axis):
                raise GridError(f"face coefficient {axis} has shape {af.shape}, "
                                f"expected {grid.face_shape(axis)}")
        self.grid = grid
        self.a_faces = [np.asarray(af, dtype=float) for af in a_faces]
        self.a_cells = a_cells
        self.mean_diagonal = np.array([float(np.mean(af)) if af.size else 0.0 for af in self.a_faces])

        L = sp.csr_matrix((grid.size, grid.size))
        for i in range(n):
            D = forward_difference(grid, i)
            L = L - D.T @ sp.diags(self.a_faces[i].ravel()) @ D
        self.has_cross_terms = False
        if a_cells is not None and n > 1:
            grid.check(a_cells[..., 0, 0], name="a_cells")
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    aij = a_cells[..., i, j].ravel()
                    if not np.any(aij):
                        continue
                    self.has_cross_terms = True
                    Ci = centered_difference(grid, i)
                    Cj = centered_difference(grid, j)
                    L = L - Ci.T @ sp.diags(aij) @ Cj
        self.matrix = L.tocsr()

    @classmethod
    def constant(cls, grid: Grid, a: np.ndarray) -> "DivFormOperator":
        """Operator for a constant n x n tensor."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        faces = [np.full(grid.face_shape(i), a[i, i]) for i in range(grid.n)]
        cells = np.broadcast_to(a, grid.shape + a.shape).copy()
        return cls(grid, faces, cells)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Apply L to a scalar field or to each trailing component of a vector field."""
        g = self.grid
        if u.shape == g.shape:
            return (self.matrix @ u.ravel()).reshape(g.shape)
        flat = u.reshape(g.size, -1)
        return (self.matrix @ flat).reshape(u.shape)

    def flux(self, u: np.ndarray, axis: int) -> np.ndarray:
        """Diagonal flux a_ii D_i u on the faces of ``axis``."""
        du = face_difference(u, self.grid, axis)
        af = self.a_faces[axis]
        if du.ndim > af.ndim:
            af = af[..., None]
        return af * du
