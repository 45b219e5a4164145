"""Landau-Lifshitz-Gilbert dynamics for the oscillating and homogenized problems.

The time step is a Gauss-Seidel projection scheme for the equivalent form
    d_t m = -m x H - alpha m x (m x H)
with the exchange term implicit, lower-order terms (anisotropy, stray,
Zeeman) lagged once per step, and a pointwise projection onto the sphere.
Every inner solve is a PCG on (I - c tau L) with the co-normal closure.
"""

from typing import Any, Dict, List, Optional, Tuple
import math
import warnings
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from .cellsolve import HomogenizedModel
from .errors import (EnergyMonotonicityViolated, InnerSolveDiverged, KernelError,
                     NoConvergence, RenormalizationDefectTooLarge)
from .grid import (DivFormOperator, Grid, centered_gradient, face_difference, faces_to_cells)
from .material import MaterialModel, evaluate_epsilon_coefficients
from .solvers import solve_shifted
from .strayfield import DemagKernel, build_kernel, stray_field

RENORMALIZATION_LIMIT = 0.1
# discrete kinetic integral may exceed (1 + alpha^2)/alpha (G(0) - G(T)) by this factor
KINETIC_BOUND_SLACK = 1.1
ENERGY_TERMS = ("exchange", "anisotropy", "stray", "stray_micro", "zeeman")


class SimulationConfig(BaseModel):
    """Time-stepping parameters of one run."""

    eps: float = Field(default=0.0, description="Period; 0 runs the homogenized problem")
    N: int = Field(default=64, description="Domain cells per axis")
    tau: Optional[float] = Field(default=None, description="Time step (default min(h^2/a_max, 1e-3))")
    T: float = Field(default=0.1, description="Final time")
    output_every: int = Field(default=10, description="Snapshot cadence in steps")
    cg_tol: float = Field(default=1e-10, description="Relative tolerance of inner solves")
    cg_maxiter_factor: int = Field(default=20, description="Inner iteration cap per axis cell")
    energy_check: str = Field(default="warn", description="Energy monotonicity policy (off/warn/strict)")
    energy_bound_constant: float = Field(default=10.0, description="C in the per-step bound C tau^2 (1 + ||H||^2)")

    @field_validator('eps')
    @classmethod
    def validate_eps(cls, v):
        if v < 0.0:
            raise ValueError("eps >= 0")
        return v

    @field_validator('N')
    @classmethod
    def validate_N(cls, v):
        if v < 4:
            raise ValueError("N >= 4")
        return v

    @field_validator('tau')
    @classmethod
    def validate_tau(cls, v):
        if v is not None and not v > 0.0:
            raise ValueError("tau > 0")
        return v

    @field_validator('T')
    @classmethod
    def validate_T(cls, v):
        if v < 0.0:
            raise ValueError("T >= 0")
        return v

    @field_validator('output_every', 'cg_maxiter_factor')
    @classmethod
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator('energy_check')
    @classmethod
    def validate_energy_check(cls, v):
        if v not in ('off', 'warn', 'strict'):
            raise ValueError(f"Invalid energy_check: {v}. Must be one of ['off', 'warn', 'strict']")
        return v

    @model_validator(mode="after")
    def check_resolution(self):
        if self.tau is not None and 0.0 < self.T < self.tau:
            raise ValueError("T >= tau")
        if self.eps > 0.0 and 1.0 / self.N > self.eps / 8.0 + 1e-15:
            raise ValueError(f"h <= eps/8 (h = 1/{self.N}, eps = {self.eps})")
        return self

    @property
    def level(self) -> str:
        return "eps" if self.eps > 0.0 else "hom"

    def resolve_tau(self, a_max: float) -> float:
        if self.tau is not None:
            return self.tau
        h = 1.0 / self.N
        return min(h * h / a_max, 1e-3)


class MagnetizationField(BaseModel):
    """Unit 3-vector per cell of a Neumann grid at time t."""

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    model_config = {"arbitrary_types_allowed": True}

    @model_validator(mode="after")
    def check_shape(self):
        self.grid.check(self.values, components=3, name="magnetization")
        return self

    def max_norm_defect(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.values, axis=-1) - 1.0)))

    def with_ghosts(self) -> np.ndarray:
        """Values padded with one ghost layer per face.

        Ghosts copy the adjacent cell, so the face difference across every
        boundary face vanishes and the discrete co-normal flux is zero.
        """
        pad = [(1, 1)] * self.grid.n + [(0, 0)]
        return np.pad(self.values, pad, mode="edge")


class LLGSystem:
    """Coefficients, operator and kernel of one level (eps or hom) on one grid."""

    def __init__(self, grid: Grid, level: str, op: DivFormOperator, a_cells: np.ndarray,
                 K, M, u: np.ndarray, h_a: np.ndarray, alpha: float, mu0: float,
                 H_d0: Optional[np.ndarray] = None, kernel: Optional[DemagKernel] = None,
                 eps: Optional[float] = None):
        if level not in ("eps", "hom"):
            raise ValueError(f"level must be 'eps' or 'hom', got {level}")
        self.grid = grid
        self.level = level
        self.op = op
        self.a_cells = a_cells
        self.K = K
        self.M = M
        self.u = np.asarray(u, dtype=float)
        self.h_a = np.asarray(h_a, dtype=float)
        self.alpha = float(alpha)
        self.mu0 = float(mu0)
        self.H_d0 = np.zeros((3, 3))
        if H_d0 is not None:
            H_d0 = np.asarray(H_d0, dtype=float)
            self.H_d0[:H_d0.shape[0], :H_d0.shape[1]] = H_d0
        self.kernel = kernel
        self.eps = eps

    @property
    def a_max(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.a_cells)))


def build_eps_system(model: MaterialModel, eps: float, grid: Grid,
                     kernel: Optional[DemagKernel] = None) -> LLGSystem:
    """System of the oscillating problem; builds the kernel when mu0 > 0."""
    samples = evaluate_epsilon_coefficients(model, eps, grid)
    if model.mu0 > 0.0 and kernel is None:
        kernel = build_kernel(grid)
    return LLGSystem(grid, "eps", samples.operator(), samples.a, samples.K, samples.M_s,
                     model.u_vector, model.h_a_vector, model.alpha, model.mu0,
                     kernel=kernel, eps=eps)


def build_hom_system(hom: HomogenizedModel, grid: Grid,
                     kernel: Optional[DemagKernel] = None) -> LLGSystem:
    """System of the homogenized problem; builds the kernel when mu0 > 0."""
    a0 = hom.a0_matrix
    if hom.mu0 > 0.0 and kernel is None:
        kernel = build_kernel(grid)
    a_cells = np.broadcast_to(a0, grid.shape + a0.shape).copy()
    return LLGSystem(grid, "hom", DivFormOperator.constant(grid, a0), a_cells, hom.K0, hom.M0,
                     np.asarray(hom.u), np.asarray(hom.h_a), hom.alpha, hom.mu0,
                     H_d0=hom.H_d0_matrix, kernel=kernel)


def _weight(value, grid: Grid) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    return arr[..., None] if arr.ndim else arr


def field_parts(m: np.ndarray, system: LLGSystem) -> Dict[str, np.ndarray]:
    """Effective field split by energy term.

    Raises:
        KernelError: If mu0 > 0 and the system has no kernel
    """
    grid = system.grid
    grid.check(m, components=3, name="magnetization")
    K = _weight(system.K, grid)
    M = _weight(system.M, grid)
    mu = np.sum(m * system.u, axis=-1, keepdims=True)
    parts = {
        "exchange": system.op.apply(m),
        "anisotropy": -K * mu * system.u,
        "stray": np.zeros_like(m),
        "stray_micro": np.zeros_like(m),
        "zeeman": M * system.h_a,
    }
    if system.mu0 > 0.0:
        if system.kernel is None:
            raise KernelError("mu0 > 0 but no stray-field kernel was supplied")
        if system.kernel.grid != grid:
            raise KernelError(f"kernel built for {system.kernel.grid!r}, field lives on {grid!r}")
        if system.level == "eps":
            parts["stray"] = system.mu0 * M * stray_field(m, system.M, system.kernel)
        else:
            parts["stray"] = system.mu0 * system.M ** 2 * stray_field(m, 1.0, system.kernel)
            parts["stray_micro"] = system.mu0 * m @ system.H_d0.T
    return parts


def effective_field(m: np.ndarray, system: LLGSystem) -> np.ndarray:
    parts = field_parts(m, system)
    return sum(parts[key] for key in ENERGY_TERMS)


def effective_field_eps(m: np.ndarray, system: LLGSystem) -> np.ndarray:
    """H = div(a^eps grad m) - K^eps (m.u) u + mu0 M^eps h_d[M^eps m] + M^eps h_a."""
    if system.level != "eps":
        raise ValueError("effective_field_eps needs an eps-level system")
    return effective_field(m, system)


def effective_field_hom(m: np.ndarray, system: LLGSystem) -> np.ndarray:
    """H = div(a0 grad m) - K0 (m.u) u + mu0 M0^2 h_d[m] + mu0 H_d0 m + M0 h_a."""
    if system.level != "hom":
        raise ValueError("effective_field_hom needs a hom-level system")
    return effective_field(m, system)


def _landau_exchange(m: np.ndarray, system: LLGSystem) -> float:
    """int a grad m : grad m with second-order cell gradients."""
    grid = system.grid
    grads = [centered_gradient(m, grid, i) for i in range(grid.n)]
    density = np.zeros(grid.shape)
    for i in range(grid.n):
        for j in range(grid.n):
            density += system.a_cells[..., i, j] * np.sum(grads[i] * grads[j], axis=-1)
    return float(grid.integrate(density))


def energy_terms(m: np.ndarray, system: LLGSystem, convention: str = "landau",
                 parts: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, float]:
    """Per-term energies.

    ``landau`` uses the Landau-Lifshitz weights and a cell-gradient quadrature.
    ``variational`` halves the quadratic terms and evaluates exchange through
    the discrete operator, which makes it the exact potential of the discrete
    effective field.
    """
    if convention not in ("landau", "variational"):
        raise ValueError(f"Invalid convention: {convention}. Must be 'landau' or 'variational'")
    parts = parts if parts is not None else field_parts(m, system)
    grid = system.grid
    pairing = {key: float(grid.integrate(np.sum(m * parts[key], axis=-1))) for key in ENERGY_TERMS}
    if convention == "variational":
        terms = {key: -0.5 * pairing[key] for key in ENERGY_TERMS}
        terms["zeeman"] = -pairing["zeeman"]
    else:
        terms = {key: -pairing[key] for key in ENERGY_TERMS}
        terms["exchange"] = _landau_exchange(m, system)
    return terms


def energy_total(m: np.ndarray, system: LLGSystem,
                 convention: str = "landau") -> Tuple[float, Dict[str, float]]:
    """Total energy of the level and its per-term breakdown."""
    terms = energy_terms(m, system, convention)
    return float(sum(terms.values())), terms


def energy_density_gl(m: np.ndarray, system: LLGSystem,
                      parts: Optional[Dict[str, np.ndarray]] = None) -> np.ndarray:
    """Pointwise g_l = a|grad m|^2 + K (m.u)^2 - mu0 (stray) - M h_a . m.

    The exchange density averages face fluxes to cells, so for diagonal a and
    unit m it equals -m . H exactly.
    """
    grid = system.grid
    parts = parts if parts is not None else field_parts(m, system)
    density = np.zeros(grid.shape)
    for i in range(grid.n):
        dm = face_difference(m, grid, i)
        density += faces_to_cells(system.op.a_faces[i] * np.sum(dm * dm, axis=-1), grid, i)
    if system.op.has_cross_terms:
        grads = [centered_gradient(m, grid, i) for i in range(grid.n)]
        for i in range(grid.n):
            for j in range(grid.n):
                if i != j:
                    density += system.a_cells[..., i, j] * np.sum(grads[i] * grads[j], axis=-1)
    for key in ("anisotropy", "stray", "stray_micro", "zeeman"):
        density -= np.sum(m * parts[key], axis=-1)
    return density


def llg_residual(m_prev: np.ndarray, m_next: np.ndarray, tau: float,
                 system: LLGSystem) -> Tuple[np.ndarray, float]:
    """d_t m - alpha H + m x H - alpha g_l m on one step, with H and g_l at m_prev.

    Returns:
        Tuple of (residual field, its L2 norm)
    """
    parts = field_parts(m_prev, system)
    H = sum(parts[key] for key in ENERGY_TERMS)
    g = energy_density_gl(m_prev, system, parts)
    res = (m_next - m_prev) / tau - system.alpha * H + np.cross(m_prev, H) - system.alpha * g[..., None] * m_prev
    return res, system.grid.l2_norm(res)


def step(m: np.ndarray, system: LLGSystem, config: SimulationConfig, tau: float,
         parts: Optional[Dict[str, np.ndarray]] = None) -> Tuple[np.ndarray, Dict[str, Any]]:
    """One Gauss-Seidel projection step.

    Args:
        m: Unit field of shape (N..., 3)
        system: Level system
        config: Tolerances and caps
        tau: Time step
        parts: Field parts at m, if already computed

    Returns:
        Tuple of (m at t + tau, diagnostics with inner iterations and renormalization defect)

    Raises:
        InnerSolveDiverged: If an inner PCG fails
        RenormalizationDefectTooLarge: If the pre-projection length deviates by more than 0.1
    """
    parts = parts if parts is not None else field_parts(m, system)
    f = parts["anisotropy"] + parts["stray"] + parts["stray_micro"] + parts["zeeman"]
    iterations = 0

    def solve(rhs, scale, guess):
        nonlocal iterations
        try:
            x, info = solve_shifted(system.op, rhs, scale, tol=config.cg_tol,
                                    maxiter_factor=config.cg_maxiter_factor, x0=guess)
        except NoConvergence as e:
            raise InnerSolveDiverged(f"inner solve failed: {e}") from e
        iterations += info["iterations"]
        return x

    m1, m2, m3 = (m[..., i] for i in range(3))
    g = [solve(m[..., i] + tau * f[..., i], tau, m[..., i]) for i in range(3)]
    m1s = m1 + (g[1] * m3 - g[2] * m2)
    g1s = solve(m1s + tau * f[..., 0], tau, g[0])
    m2s = m2 + (g[2] * m1s - g1s * m3)
    g2s = solve(m2s + tau * f[..., 1], tau, g[1])
    m3s = m3 + (g1s * m2s - g2s * m1s)
    mstar = np.stack([m1s, m2s, m3s], axis=-1)

    scale = system.alpha * tau
    mss = np.stack([solve(mstar[..., i] + scale * f[..., i], scale, mstar[..., i]) for i in range(3)], axis=-1)
    length = np.linalg.norm(mss, axis=-1)
    defect = float(np.max(np.abs(length - 1.0)))
    if defect > RENORMALIZATION_LIMIT:
        raise RenormalizationDefectTooLarge(defect, RENORMALIZATION_LIMIT)
    return mss / length[..., None], {"inner_iterations": iterations, "renormalization_defect": defect}


class Trajectory(BaseModel):
    """Snapshots and the per-step energy log of one run."""

    level: str
    alpha: float
    tau: float
    snapshots: List[MagnetizationField]
    final: MagnetizationField
    energy_log: pd.DataFrame
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"arbitrary_types_allowed": True}


def _check_energy(k: int, G_prev: float, G: float, bound: float, policy: str,
                  violations: List[Dict[str, float]]) -> None:
    increase = G - G_prev
    if increase <= bound:
        return
    violations.append({"step": k, "increase": increase, "bound": bound})
    if policy == "strict":
        raise EnergyMonotonicityViolated(k, increase, bound)
    if policy == "warn":
        warnings.warn(f"energy increased by {increase:.3e} at step {k} (bound {bound:.3e})")


def run(m_init: MagnetizationField, system: LLGSystem, config: SimulationConfig,
        tau: Optional[float] = None) -> Trajectory:
    """Integrate from m_init to T, logging energies at every step.

    The step count is ceil(T / tau) and the step is shrunk to land on T
    exactly. Snapshots are kept every ``output_every`` steps and at T.
    """
    grid = system.grid
    if m_init.grid != grid:
        raise KernelError(f"initial field on {m_init.grid!r}, system on {grid!r}")
    tau = tau if tau is not None else config.resolve_tau(system.a_max)
    n_steps = 0 if config.T == 0.0 else int(math.ceil(config.T / tau - 1e-9))
    tau_eff = config.T / n_steps if n_steps else tau

    m = m_init.values.copy()
    t = m_init.t
    rows = []
    snapshots = [MagnetizationField(grid=grid, values=m.copy(), t=t)]
    damping = 0.0
    kinetic = 0.0
    last_iterations = 0
    max_defect = 0.0
    violations: List[Dict[str, float]] = []
    G_prev, H_norm_prev = None, 0.0

    for k in range(n_steps + 1):
        parts = field_parts(m, system)
        terms = energy_terms(m, system, "variational", parts)
        G = float(sum(terms.values()))
        H = sum(parts[key] for key in ENERGY_TERMS)
        row = {"t": t, "G_total": G}
        row.update(terms)
        row["G_landau"] = float(sum(energy_terms(m, system, "landau", parts).values()))
        row.update({"damping_integral": damping, "kinetic_integral": kinetic,
                    "max_norm_defect": float(np.max(np.abs(np.linalg.norm(m, axis=-1) - 1.0))),
                    "inner_iterations": last_iterations})
        rows.append(row)

        if G_prev is not None and config.energy_check != "off":
            bound = config.energy_bound_constant * tau_eff ** 2 * (1.0 + H_norm_prev ** 2)
            _check_energy(k, G_prev, G, bound, config.energy_check, violations)
        if k == n_steps:
            break

        m_new, diag = step(m, system, config, tau_eff, parts)
        damping += system.alpha * tau_eff * grid.l2_norm(np.cross(m, H)) ** 2
        kinetic += tau_eff * grid.l2_norm((m_new - m) / tau_eff) ** 2
        last_iterations = diag["inner_iterations"]
        max_defect = max(max_defect, diag["renormalization_defect"])
        G_prev, H_norm_prev = G, grid.l2_norm(H)
        m = m_new
        t = m_init.t + (k + 1) * tau_eff
        if (k + 1) % config.output_every == 0 and k + 1 < n_steps:
            snapshots.append(MagnetizationField(grid=grid, values=m.copy(), t=t))

    final = MagnetizationField(grid=grid, values=m, t=t)
    if n_steps:
        snapshots.append(final)
    return Trajectory(level=system.level, alpha=system.alpha, tau=tau_eff, snapshots=snapshots,
                      final=final, energy_log=pd.DataFrame(rows),
                      diagnostics={"steps": n_steps, "max_renormalization_defect": max_defect,
                                   "energy_violations": violations})


def dissipation_report(trajectory: Trajectory, tolerance: float = 1e-10) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Discrete energy balance G(t) + alpha int ||m x H||^2 - G(0) and the kinetic bound.

    Returns:
        Tuple of (per-step DataFrame, summary dict)
    """
    log = trajectory.energy_log
    G0 = float(log["G_total"].iloc[0])
    df = pd.DataFrame({
        "t": log["t"],
        "G_total": log["G_total"],
        "dG": log["G_total"].diff().fillna(0.0),
        "damping_integral": log["damping_integral"],
        "kinetic_integral": log["kinetic_integral"],
    })
    df["defect"] = df["G_total"] + df["damping_integral"] - G0

    alpha = trajectory.alpha
    factor = (1.0 + alpha ** 2) / alpha
    GT = float(log["G_total"].iloc[-1])
    kinetic = float(log["kinetic_integral"].iloc[-1])
    bound = factor * (G0 - GT)
    summary = {
        "G_initial": G0,
        "G_final": GT,
        "max_abs_defect": float(df["defect"].abs().max()),
        "final_defect": float(df["defect"].iloc[-1]),
        "kinetic_integral": kinetic,
        "kinetic_bound": bound,
        "kinetic_within_bound": bool(kinetic <= KINETIC_BOUND_SLACK * bound + tolerance),
        "kinetic_bound_initial": factor * G0,
        "kinetic_within_initial_bound": bool(kinetic <= factor * G0 + tolerance),
    }
    return df, summary
