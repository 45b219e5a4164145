"""First- and second-order correctors, the Neumann corrector and corrected approximations."""

from typing import Any, Callable, Dict, List, Optional, Tuple
import numpy as np
from pydantic import BaseModel, Field

from .cellsolve import CellSolutions, HomogenizedModel, solve_chi
from .errors import GridError, KernelError, ProfileError, TimeMismatchError
from .grid import DivFormOperator, Grid
from .interpolate import cell_to_domain, grid_to_grid, transfer
from .llg import MagnetizationField
from .material import MaterialModel, evaluate_epsilon_coefficients
from .solvers import solve_singular
from .strayfield import DemagKernel, stray_field

ZEEMAN_TERMS = ("literal", "fluctuation", "cell")
PROFILES = ("uniform", "tilt-bump", "swirl-bump")
COLLAR = 0.1
TIME_TOL = 1e-12


class SlowField(BaseModel):
    """m0 with its first and second derivatives on a target grid.

    grad: (n, N..., 3), hess: (n, n, N..., 3). m0 is renormalized and its
    derivatives are projected so the unit-length identities hold exactly.
    """

    grid: Grid
    t: float
    m0: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    model_config = {"arbitrary_types_allowed": True}


class CorrectorBundle(BaseModel):
    """Corrector fields of one eps on one domain grid at one time."""

    grid: Grid
    eps: float
    t: float
    m0: np.ndarray
    grad_m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    phi: np.ndarray = Field(description="Neumann corrector potentials, shape (n, N...)")
    omega_N: np.ndarray
    zeeman_term: str = "literal"
    m2_variants: Dict[str, np.ndarray] = Field(default_factory=dict)

    model_config = {"arbitrary_types_allowed": True}


def _tangent(v: np.ndarray, m: np.ndarray) -> np.ndarray:
    return v - np.sum(v * m, axis=-1, keepdims=True) * m


def slow_field(m0: MagnetizationField, target: Grid) -> SlowField:
    """Carry m0 and its derivatives from the homogenized grid onto ``target``.

    Values go through :func:`transfer` (cell averages on a coarser target),
    derivatives through the cubic splines.
    """
    source = m0.grid
    n = source.n
    if target.n != n or target.periodic:
        raise GridError(f"cannot carry a field from {source!r} to {target!r}")
    values = m0.values

    def derivative(orders):
        return grid_to_grid(values, source, target, orders=orders)

    raw = transfer(values, source, target)
    length = np.linalg.norm(raw, axis=-1, keepdims=True)
    m = raw / length
    grad = np.empty((n,) + target.shape + (3,))
    for i in range(n):
        orders = [0] * n
        orders[i] = 1
        # derivative of raw / |raw|
        grad[i] = _tangent(derivative(orders), m) / length
    hess = np.empty((n, n) + target.shape + (3,))
    for i in range(n):
        for j in range(i, n):
            orders = [0] * n
            orders[i] += 1
            orders[j] += 1
            hess[i, j] = derivative(orders) / length
            hess[j, i] = hess[i, j]
    return SlowField(grid=target, t=m0.t, m0=m, grad=grad, hess=hess)


def _cell_values(field: np.ndarray, cells: CellSolutions, target: Grid, eps: float) -> np.ndarray:
    return cell_to_domain(field, cells.grid, target, eps)


def build_m1(slow: SlowField, cells: CellSolutions, eps: float) -> np.ndarray:
    """m1 = sum_j chi_j(x / eps) d_j m0."""
    n = slow.grid.n
    if cells.grid.n != n:
        raise GridError(f"cell grid {cells.grid!r} does not match domain grid {slow.grid!r}")
    m1 = np.zeros(slow.m0.shape)
    for j in range(n):
        m1 += _cell_values(cells.chi[j], cells, slow.grid, eps)[..., None] * slow.grad[j]
    return m1


def _zeeman_weight(choice: str, cells: CellSolutions, model: Optional[MaterialModel],
                   hom: HomogenizedModel, target: Grid, eps: float) -> np.ndarray:
    if choice == "cell":
        return _cell_values(cells.rho, cells, target, eps)
    if model is None:
        raise ValueError(f"zeeman_term '{choice}' needs the material model")
    M_s = evaluate_epsilon_coefficients(model, eps, target).M_s
    return M_s - hom.M0 if choice == "fluctuation" else M_s


def lower_order_source(slow: SlowField, cells: CellSolutions, hom: HomogenizedModel, eps: float,
                       m0: Optional[MagnetizationField] = None, kernel: Optional[DemagKernel] = None,
                       model: Optional[MaterialModel] = None, zeeman_term: str = "literal") -> np.ndarray:
    """T_low = -kappa (m0.u) u + mu0 rho h_d[M0 m0] + mu0 Lambda m0 + Zeeman term.

    The stray field of the homogenized solution is computed on its own grid
    (``kernel`` built for m0.grid) and splined onto the domain grid.

    Raises:
        KernelError: If mu0 > 0 and no kernel (or no coarse field) is given
    """
    if zeeman_term not in ZEEMAN_TERMS:
        raise ValueError(f"Invalid zeeman_term: {zeeman_term}. Must be one of {list(ZEEMAN_TERMS)}")
    grid = slow.grid
    n = grid.n
    m = slow.m0
    u = np.asarray(hom.u, dtype=float)
    kappa = _cell_values(cells.kappa, cells, grid, eps)
    T = -kappa[..., None] * np.sum(m * u, axis=-1, keepdims=True) * u
    if hom.mu0 > 0.0:
        if kernel is None or m0 is None:
            raise KernelError("mu0 > 0 requires the homogenized field and its stray-field kernel")
        hd = transfer(stray_field(m0.values, hom.M0, kernel), m0.grid, grid)
        rho = _cell_values(cells.rho, cells, grid, eps)
        T += hom.mu0 * rho[..., None] * hd
        for i in range(n):
            for j in range(n):
                lam = _cell_values(cells.Lambda[i, j], cells, grid, eps)
                T[..., i] += hom.mu0 * lam * m[..., j]
    weight = _zeeman_weight(zeeman_term, cells, model, hom, grid, eps)
    T += weight[..., None] * np.asarray(hom.h_a, dtype=float)
    return T


def build_m2(slow: SlowField, cells: CellSolutions, hom: HomogenizedModel, eps: float,
             m1: Optional[np.ndarray] = None, m0: Optional[MagnetizationField] = None,
             kernel: Optional[DemagKernel] = None, model: Optional[MaterialModel] = None,
             zeeman_term: str = "literal") -> np.ndarray:
    """m2 = P(sum theta_ij d_ij m0 + T_low) - 1/2 |m1|^2 m0, P the tangent projection at m0.

    For unit m0 the projection of the theta term reproduces the
    (theta_ij d_i m0 . d_j m0) m0 contribution, so m0 . m2 = -1/2 |m1|^2 holds
    pointwise.
    """
    grid = slow.grid
    n = grid.n
    m1 = build_m1(slow, cells, eps) if m1 is None else m1
    v = lower_order_source(slow, cells, hom, eps, m0=m0, kernel=kernel, model=model,
                           zeeman_term=zeeman_term)
    for i in range(n):
        for j in range(n):
            v = v + _cell_values(cells.theta[i, j], cells, grid, eps)[..., None] * slow.hess[i, j]
    half = 0.5 * np.sum(m1 * m1, axis=-1, keepdims=True)
    return _tangent(v, slow.m0) - half * slow.m0


def neumann_rhs(a0: np.ndarray, grid: Grid, i: int) -> np.ndarray:
    """Cell-wise source of the co-normal data nu . a0 e_i on the boundary faces."""
    b = np.zeros(grid.shape)
    for k in range(grid.n):
        lo = [slice(None)] * grid.n
        hi = [slice(None)] * grid.n
        lo[k] = 0
        hi[k] = -1
        b[tuple(lo)] += a0[k, i] / grid.h
        b[tuple(hi)] -= a0[k, i] / grid.h
    return b


def solve_neumann_phi(model: MaterialModel, hom: HomogenizedModel, eps: float, grid: Grid,
                      tol: float = 1e-10, maxiter_factor: int = 20,
                      op: Optional[DivFormOperator] = None) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Phi_i with div(a^eps grad Phi_i) = 0 and nu . a^eps grad Phi_i = nu . a0 e_i.

    Solved as Phi_i = x_i + psi_i with zero-mean psi_i, then shifted so that
    Phi_i equals x_i at the centre cell.

    Returns:
        Tuple of (phi with shape (n, N...), diagnostics)

    Raises:
        NoConvergence: If PCG hits its cap
    """
    op = op or evaluate_epsilon_coefficients(model, eps, grid).operator()
    a0 = hom.a0_matrix
    x = grid.points()
    center = grid.center_index()
    phi = np.empty((grid.n,) + grid.shape)
    residuals: List[float] = []
    for i in range(grid.n):
        rhs = neumann_rhs(a0, grid, i) - op.apply(x[..., i])
        psi, info = solve_singular(op, rhs, tol=tol, maxiter_factor=maxiter_factor,
                                   label=f"Phi_{i + 1}")
        phi[i] = x[..., i] + psi - psi[center]
        residuals.append(info["residual"])
    sup = float(np.max(np.abs(phi - np.moveaxis(x, -1, 0))))
    return phi, {"phi_residuals": residuals, "phi_sup_deviation": sup}


def build_omega_N(slow: SlowField, phi: np.ndarray, cells: CellSolutions, eps: float) -> np.ndarray:
    """omega_N = sum_i (Phi_i - x_i - eps chi_i(x / eps)) d_i m0."""
    grid = slow.grid
    x = grid.points()
    out = np.zeros(slow.m0.shape)
    for i in range(grid.n):
        chi = _cell_values(cells.chi[i], cells, grid, eps)
        out += (phi[i] - x[..., i] - eps * chi)[..., None] * slow.grad[i]
    return out


def build_correctors(m0: MagnetizationField, cells: CellSolutions, hom: HomogenizedModel,
                     model: MaterialModel, eps: float, grid: Grid, phi: np.ndarray,
                     kernel: Optional[DemagKernel] = None, zeeman_term: str = "literal",
                     variants: Tuple[str, ...] = ("literal", "fluctuation")) -> CorrectorBundle:
    """All corrector fields of one eps at the time of ``m0``."""
    slow = slow_field(m0, grid)
    m1 = build_m1(slow, cells, eps)
    m2_variants = {}
    for choice in dict.fromkeys((zeeman_term,) + tuple(variants)):
        m2_variants[choice] = build_m2(slow, cells, hom, eps, m1=m1, m0=m0, kernel=kernel,
                                       model=model, zeeman_term=choice)
    return CorrectorBundle(grid=grid, eps=eps, t=m0.t, m0=slow.m0, grad_m0=slow.grad, m1=m1,
                           m2=m2_variants[zeeman_term], phi=phi,
                           omega_N=build_omega_N(slow, phi, cells, eps),
                           zeeman_term=zeeman_term, m2_variants=m2_variants)


def corrector_identity_defects(bundle: CorrectorBundle) -> Dict[str, float]:
    """max |m0 . m1| and max |m0 . m2 + 1/2 |m1|^2|."""
    m0, m1, m2 = bundle.m0, bundle.m1, bundle.m2
    return {
        "m0_dot_m1": float(np.max(np.abs(np.sum(m0 * m1, axis=-1)))),
        "m0_dot_m2": float(np.max(np.abs(np.sum(m0 * m2, axis=-1) + 0.5 * np.sum(m1 * m1, axis=-1)))),
    }


def build_approximations(m0: MagnetizationField, bundle: CorrectorBundle,
                         eps: Optional[float] = None) -> Dict[str, np.ndarray]:
    """The three comparison fields on the bundle grid, not renormalized.

    Returns:
        Dict with ``tilde`` (m0 + eps m1 + eps^2 m2), ``neumann_corrected``
        ((Phi - x) grad m0 added) and ``twoscale_corrected`` (eps chi grad m0 added),
        plus ``tilde_<variant>`` for every stored m2 variant

    Raises:
        TimeMismatchError: If m0 and the bundle belong to different times
    """
    if abs(m0.t - bundle.t) > TIME_TOL:
        raise TimeMismatchError(f"homogenized field at t = {m0.t}, correctors at t = {bundle.t}")
    eps = bundle.eps if eps is None else eps
    if abs(eps - bundle.eps) > TIME_TOL:
        raise TimeMismatchError(f"correctors built for eps = {bundle.eps}, requested {eps}")
    grid = bundle.grid
    x = grid.points()
    base = bundle.m0
    neumann = base.copy()
    for i in range(grid.n):
        neumann += (bundle.phi[i] - x[..., i])[..., None] * bundle.grad_m0[i]
    out = {
        "tilde": base + eps * bundle.m1 + eps ** 2 * bundle.m2,
        "neumann_corrected": neumann,
        "twoscale_corrected": base + eps * bundle.m1,
    }
    for choice, m2 in bundle.m2_variants.items():
        out[f"tilde_{choice}"] = base + eps * bundle.m1 + eps ** 2 * m2
    return out


def _bump(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Smooth bump on [COLLAR, 1 - COLLAR] with its derivative."""
    half = 0.5 - COLLAR
    t = (s - 0.5) / half
    inside = np.abs(t) < 1.0
    q = np.where(inside, 1.0 - t * t, 1.0)
    value = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    slope = np.where(inside, value * (-2.0 * t / q ** 2) / half, 0.0)
    return value, slope


def _bump_field(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = x.shape[-1]
    parts = [_bump(x[..., i]) for i in range(n)]
    b = np.prod([p[0] for p in parts], axis=0)
    grad = []
    for i in range(n):
        g = parts[i][1]
        for j in range(n):
            if j != i:
                g = g * parts[j][0]
        grad.append(g)
    return b, np.stack(grad)


def profile_uniform(x: np.ndarray, theta_max: float = 0.3) -> Tuple[np.ndarray, np.ndarray]:
    n = x.shape[-1]
    m = np.zeros(x.shape[:-1] + (3,))
    m[..., 0] = np.sin(theta_max)
    m[..., 2] = np.cos(theta_max)
    return m, np.zeros((n,) + m.shape)


def profile_tilt_bump(x: np.ndarray, theta_max: float = 0.5 * np.pi) -> Tuple[np.ndarray, np.ndarray]:
    """m = (sin theta, 0, cos theta), theta = theta_max b(x)."""
    b, db = _bump_field(x)
    theta = theta_max * b
    m = np.stack([np.sin(theta), np.zeros_like(theta), np.cos(theta)], axis=-1)
    dm = np.stack([np.cos(theta), np.zeros_like(theta), -np.sin(theta)], axis=-1)
    grad = theta_max * db[..., None] * dm
    return m, grad


def profile_swirl_bump(x: np.ndarray, theta_max: float = 0.5 * np.pi) -> Tuple[np.ndarray, np.ndarray]:
    """Polar angle theta_max b(x), azimuth 2 pi x_1."""
    b, db = _bump_field(x)
    theta = theta_max * b
    azimuth = 2.0 * np.pi * x[..., 0]
    st, ct = np.sin(theta), np.cos(theta)
    sa, ca = np.sin(azimuth), np.cos(azimuth)
    m = np.stack([st * ca, st * sa, ct], axis=-1)
    d_theta = np.stack([ct * ca, ct * sa, -st], axis=-1)
    d_azimuth = np.stack([-st * sa, st * ca, np.zeros_like(st)], axis=-1)
    grad = theta_max * db[..., None] * d_theta
    grad[0] = grad[0] + 2.0 * np.pi * d_azimuth
    return m, grad


PROFILE_REGISTRY: Dict[str, Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = {
    "uniform": profile_uniform,
    "tilt-bump": profile_tilt_bump,
    "swirl-bump": profile_swirl_bump,
}


def evaluate_profile(profile: str, grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """Profile values (N..., 3) and gradients (n, N..., 3) at the cell centres.

    Raises:
        ProfileError: If the profile is unknown or not unit length
    """
    if profile not in PROFILE_REGISTRY:
        raise ProfileError(f"Unknown profile: {profile}. Must be one of {list(PROFILE_REGISTRY)}")
    m, grad = PROFILE_REGISTRY[profile](grid.points())
    defect = float(np.max(np.abs(np.linalg.norm(m, axis=-1) - 1.0)))
    if defect > 1e-12:
        raise ProfileError(f"profile '{profile}' is not unit length (defect {defect:.3e})")
    return m, grad


def collar_cutoff(grid: Grid) -> np.ndarray:
    """Indicator of the interior (COLLAR, 1 - COLLAR)^n."""
    x = grid.points()
    return np.all((x > COLLAR) & (x < 1.0 - COLLAR), axis=-1).astype(float)


def make_initial_data(profile: str, model: MaterialModel, eps: float, grid: Grid,
                      cells: Optional[CellSolutions] = None, hom: Optional[HomogenizedModel] = None,
                      N_cell: int = 64
                      ) -> Tuple[MagnetizationField, MagnetizationField, Dict[str, Any]]:
    """Initial data of the homogenized and the eps problem.

    m_init^eps = normalize(m_init^0 + eps m1[profile] cutoff), where the cutoff
    keeps the boundary collar (and with it the co-normal condition) exact.
    When ``hom`` is given the surrogate residual
    ||div(a^eps grad m^eps) - div(a0 grad m0)|| is reported.

    Returns:
        Tuple of (m_init^0, m_init^eps, diagnostics)
    """
    m0, grad = evaluate_profile(profile, grid)
    init0 = MagnetizationField(grid=grid, values=m0, t=0.0)
    diagnostics: Dict[str, Any] = {"profile": profile}
    if eps <= 0.0:
        return init0, MagnetizationField(grid=grid, values=m0.copy(), t=0.0), diagnostics

    if cells is not None:
        chi = [cell_to_domain(cells.chi[j], cells.grid, grid, eps) for j in range(grid.n)]
    else:
        chi_cell, _ = solve_chi(model, N_cell)
        cell_grid = Grid(grid.n, N_cell, periodic=True)
        chi = [cell_to_domain(chi_cell[j], cell_grid, grid, eps) for j in range(grid.n)]
    m1 = sum(chi[j][..., None] * grad[j] for j in range(grid.n))
    raw = m0 + eps * m1 * collar_cutoff(grid)[..., None]
    m_eps = raw / np.linalg.norm(raw, axis=-1, keepdims=True)
    init_eps = MagnetizationField(grid=grid, values=m_eps, t=0.0)
    diagnostics["l2_deviation"] = grid.l2_norm(m_eps - m0)

    if hom is not None:
        op_eps = evaluate_epsilon_coefficients(model, eps, grid).operator()
        op_hom = DivFormOperator.constant(grid, hom.a0_matrix)
        residual = grid.l2_norm(op_eps.apply(m_eps) - op_hom.apply(m0))
        diagnostics["surrogate_residual"] = residual
        diagnostics["surrogate_residual_relative"] = residual / max(grid.l2_norm(op_hom.apply(m0)), 1e-300)
    return init0, init_eps, diagnostics
