"""Periodic coefficient families and the material model."""

from typing import Dict, List, Optional, Tuple
import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import GridError, MaterialError
from .grid import DivFormOperator, Grid

FAMILIES = ("constant", "single-harmonic", "multi-harmonic", "smoothed-checkerboard")


class CoefficientFamily(BaseModel):
    """Smooth Y-periodic scalar function from a closed registry.

    constant:               value
    single-harmonic:        mean + amp * fn(2 pi k.y + phase)
    multi-harmonic:         mean + sum_l amp_l * fn(2 pi k_l.y + phase_l)
    smoothed-checkerboard:  low + (high - low) (1 + tanh(s prod_i sin 2 pi y_i) / tanh s) / 2,
                            high = low * contrast
    """

    family: str = Field(default="constant", description="Family id")
    value: float = Field(default=1.0, description="Constant value")
    mean: float = Field(default=0.0, description="Mean of a harmonic family")
    amp: List[float] = Field(default_factory=list, description="Harmonic amplitudes")
    k: List[List[int]] = Field(default_factory=list, description="Integer wave vectors")
    phase: List[float] = Field(default_factory=list, description="Harmonic phases")
    fn: str = Field(default="sin", description="Harmonic basis function (sin/cos)")
    low: float = Field(default=1.0, description="Checkerboard lower value")
    contrast: float = Field(default=1.0, description="Checkerboard high/low ratio")
    sharpness: float = Field(default=4.0, description="Checkerboard tanh sharpness")

    @field_validator('family')
    @classmethod
    def validate_family(cls, v):
        if v not in FAMILIES:
            raise ValueError(f"Invalid family: {v}. Must be one of {list(FAMILIES)}")
        return v

    @field_validator('fn')
    @classmethod
    def validate_fn(cls, v):
        if v not in ('sin', 'cos'):
            raise ValueError(f"Invalid fn: {v}. Must be 'sin' or 'cos'")
        return v

    @model_validator(mode="after")
    def check_parameters(self):
        if self.family in ("single-harmonic", "multi-harmonic"):
            if not self.amp or len(self.amp) != len(self.k):
                raise ValueError(f"{self.family}: need one wave vector per amplitude "
                                 f"(got {len(self.amp)} amp, {len(self.k)} k)")
            if self.family == "single-harmonic" and len(self.amp) != 1:
                raise ValueError("single-harmonic takes exactly one amplitude")
            if not self.phase:
                self.phase = [0.0] * len(self.amp)
            if len(self.phase) != len(self.amp):
                raise ValueError(f"{self.family}: phase list must match amp list")
            if len({len(kv) for kv in self.k}) != 1:
                raise ValueError(f"{self.family}: wave vectors must share one length")
        if self.family == "smoothed-checkerboard":
            if self.contrast < 1.0:
                raise ValueError("smoothed-checkerboard: contrast >= 1")
            if self.sharpness <= 0.0:
                raise ValueError("smoothed-checkerboard: sharpness > 0")
        return self

    @classmethod
    def const(cls, value: float) -> "CoefficientFamily":
        return cls(family="constant", value=value)

    def wave_dimension(self) -> Optional[int]:
        """Length of the wave vectors, None if the family has none."""
        return len(self.k[0]) if self.k else None

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """Evaluate at points y of shape (..., n)."""
        y = np.asarray(y, dtype=float)
        if self.family == "constant":
            return np.full(y.shape[:-1], self.value)
        if self.family == "smoothed-checkerboard":
            s = np.prod(np.sin(2.0 * np.pi * y), axis=-1)
            high = self.low * self.contrast
            return self.low + (high - self.low) * 0.5 * (1.0 + np.tanh(self.sharpness * s) / np.tanh(self.sharpness))
        basis = np.sin if self.fn == "sin" else np.cos
        out = np.full(y.shape[:-1], self.mean)
        for amp, kv, ph in zip(self.amp, self.k, self.phase):
            out = out + amp * basis(2.0 * np.pi * (y @ np.asarray(kv, dtype=float)) + ph)
        return out

    def bounds(self) -> Tuple[float, float]:
        """Guaranteed (lower, upper) bounds."""
        if self.family == "constant":
            return self.value, self.value
        if self.family == "smoothed-checkerboard":
            return self.low, self.low * self.contrast
        spread = float(np.sum(np.abs(self.amp)))
        return self.mean - spread, self.mean + spread

    def describe(self) -> str:
        """Canonical one-line config form."""
        if self.family == "constant":
            return f"constant value={self.value!r}"
        if self.family == "smoothed-checkerboard":
            return (f"smoothed-checkerboard low={self.low!r} contrast={self.contrast!r} "
                    f"sharpness={self.sharpness!r}")
        amp = ",".join(repr(a) for a in self.amp)
        k = ";".join(",".join(str(c) for c in kv) for kv in self.k)
        phase = ",".join(repr(p) for p in self.phase)
        return f"{self.family} mean={self.mean!r} amp={amp} k={k} phase={phase} fn={self.fn}"


class CoefficientSamples(BaseModel):
    """Material functions sampled on one grid.

    ``a`` holds the full tensor at cell centres, ``a_faces[i]`` holds a_ii at
    the faces normal to axis i, where the flux-form operator needs it.
    """

    grid: Grid
    a: np.ndarray
    a_faces: List[np.ndarray]
    K: np.ndarray
    M_s: np.ndarray
    eps: Optional[float] = None

    model_config = {"arbitrary_types_allowed": True}

    def operator(self) -> DivFormOperator:
        return DivFormOperator(self.grid, self.a_faces, self.a if self.grid.n > 1 else None)

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.a)))


class MaterialModel(BaseModel):
    """All physical coefficients of the periodic composite.

    Immutable after construction; safe to share read-only across workers.
    """

    dimension: int = Field(default=1, description="Spatial dimension n")
    a: CoefficientFamily = Field(default_factory=lambda: CoefficientFamily.const(1.0),
                                 description="Isotropic exchange coefficient, a(y) I")
    a_entries: Dict[str, CoefficientFamily] = Field(default_factory=dict,
                                                    description="Tensor entries overriding a, keys '11', '12', ...")
    K: CoefficientFamily = Field(default_factory=lambda: CoefficientFamily.const(0.0),
                                 description="Uniaxial anisotropy strength")
    M_s: CoefficientFamily = Field(default_factory=lambda: CoefficientFamily.const(1.0),
                                   description="Saturation magnetization")
    u: List[float] = Field(default_factory=lambda: [0.0, 0.0, 1.0], description="Easy axis")
    alpha: float = Field(default=0.5, description="Gilbert damping")
    mu0: float = Field(default=0.0, description="Stray-field coupling")
    h_a: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], description="Applied field")
    a_min: float = Field(default=0.0, description="Coercivity constant (computed)")
    a_max: float = Field(default=0.0, description="Boundedness constant (computed)")

    @field_validator('dimension')
    @classmethod
    def validate_dimension(cls, v):
        if v not in (1, 2, 3):
            raise ValueError("dimension in {1, 2, 3}")
        return v

    @field_validator('alpha')
    @classmethod
    def validate_alpha(cls, v):
        if not v > 0.0:
            raise ValueError("alpha > 0")
        return v

    @field_validator('mu0')
    @classmethod
    def validate_mu0(cls, v):
        if not v >= 0.0:
            raise ValueError("mu0 >= 0")
        return v

    @field_validator('u')
    @classmethod
    def validate_u(cls, v):
        if len(v) != 3:
            raise ValueError("u must have 3 components")
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-12:
            raise ValueError("|u| = 1 (easy axis must be a unit vector)")
        return v

    @field_validator('h_a')
    @classmethod
    def validate_h_a(cls, v):
        if len(v) != 3:
            raise ValueError("h_a must have 3 components")
        return v

    @model_validator(mode="after")
    def check_model(self):
        n = self.dimension
        if n == 1 and self.mu0 > 0.0:
            raise ValueError("mu0 > 0 requires n != 1 (the stray-field estimate excludes n = 1)")
        for key in self.a_entries:
            if len(key) != 2 or not key.isdigit():
                raise ValueError(f"a_{key}: tensor entries are named a_ij")
            i, j = int(key[0]), int(key[1])
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"a_{key}: index outside dimension {n}")
            if i > j:
                raise ValueError(f"a_{key}: a is symmetric, give a_{j}{i} instead")
        families = {"a": self.a, "K": self.K, "M_s": self.M_s}
        families.update({f"a_{key}": fam for key, fam in self.a_entries.items()})
        for name, fam in families.items():
            wd = fam.wave_dimension()
            if wd is not None and wd != n:
                raise ValueError(f"{name}: wave vectors have length {wd}, dimension is {n}")
        if self.K.bounds()[0] < 0.0:
            raise ValueError("K >= 0")
        if self.M_s.bounds()[0] <= 0.0:
            raise ValueError("M_s > 0")

        lower, upper = self._tensor_bounds()
        sampled = self._sampled_eigenvalue_range()
        if sampled[0] <= 0.0:
            raise ValueError(f"a_min > 0 (sampled smallest eigenvalue {sampled[0]:.3e})")
        self.a_min = lower if lower > 0.0 else sampled[0]
        self.a_max = max(upper, sampled[1])
        return self

    def _entry(self, i: int, j: int) -> Optional[CoefficientFamily]:
        key = f"{min(i, j) + 1}{max(i, j) + 1}"
        if key in self.a_entries:
            return self.a_entries[key]
        return self.a if i == j else None

    def _tensor_bounds(self) -> Tuple[float, float]:
        """Gershgorin bounds from the family bounds."""
        n = self.dimension
        lo, hi = np.inf, -np.inf
        for i in range(n):
            diag_lo, diag_hi = self._entry(i, i).bounds()
            off = 0.0
            for j in range(n):
                fam = self._entry(i, j) if j != i else None
                if fam is not None:
                    off += max(abs(b) for b in fam.bounds())
            lo = min(lo, diag_lo - off)
            hi = max(hi, diag_hi + off)
        return float(lo), float(hi)

    def _sampled_eigenvalue_range(self) -> Tuple[float, float]:
        m = {1: 512, 2: 128, 3: 32}[self.dimension]
        y = Grid(self.dimension, m, periodic=True).points()
        eig = np.linalg.eigvalsh(self.exchange_tensor(y))
        return float(np.min(eig)), float(np.max(eig))

    @property
    def u_vector(self) -> np.ndarray:
        return np.asarray(self.u, dtype=float)

    @property
    def h_a_vector(self) -> np.ndarray:
        return np.asarray(self.h_a, dtype=float)

    def exchange_tensor(self, y: np.ndarray) -> np.ndarray:
        """a(y) of shape (..., n, n)."""
        n = self.dimension
        out = np.zeros(y.shape[:-1] + (n, n))
        for i in range(n):
            for j in range(i, n):
                fam = self._entry(i, j)
                if fam is None:
                    continue
                vals = fam.evaluate(y)
                out[..., i, j] = vals
                out[..., j, i] = vals
        return out

    def sample(self, grid: Grid, eps: Optional[float] = None) -> CoefficientSamples:
        """Sample every coefficient on ``grid`` at y = x (cell grid) or y = frac(x / eps)."""
        if grid.n != self.dimension:
            raise GridError(f"grid dimension {grid.n} does not match material dimension {self.dimension}")

        def to_cell(x):
            return x if eps is None else np.mod(x / eps, 1.0)

        y = to_cell(grid.points())
        a = self.exchange_tensor(y)
        faces = []
        for i in range(grid.n):
            fam = self._entry(i, i)
            faces.append(fam.evaluate(to_cell(grid.face_points(i))))
        return CoefficientSamples(grid=grid, a=a, a_faces=faces,
                                  K=self.K.evaluate(y), M_s=self.M_s.evaluate(y), eps=eps)


def evaluate_on_cell_grid(model: MaterialModel, N_cell: int) -> CoefficientSamples:
    """Sample a, K, M_s at the cell centres y_k = (k + 1/2) / N_cell of Y.

    Periodic indexing: sample k + N_cell is sample k. Face k of each axis
    sits at (k + 1) / N_cell between samples k and k + 1.

    Raises:
        GridError: If N_cell is not a power of two >= 8
        MaterialError: If a sampled eigenvalue of a is not positive
    """
    if N_cell < 8 or N_cell & (N_cell - 1):
        raise GridError(f"N_cell must be a power of two >= 8, got {N_cell}")
    samples = model.sample(Grid(model.dimension, N_cell, periodic=True))
    _check_samples(samples)
    return samples


def evaluate_epsilon_coefficients(model: MaterialModel, eps: float, grid: Grid) -> CoefficientSamples:
    """Sample a^eps(x) = a(frac(x / eps)) and friends on a domain grid."""
    if not eps > 0.0:
        raise MaterialError(f"eps must be positive, got {eps}")
    samples = model.sample(grid, eps=eps)
    _check_samples(samples)
    return samples


def _check_samples(samples: CoefficientSamples) -> None:
    for name in ("a", "K", "M_s"):
        if not np.all(np.isfinite(getattr(samples, name))):
            raise MaterialError(f"non-finite {name} samples")
    if samples.min_eigenvalue() <= 0.0:
        raise MaterialError(f"non-positive a_min on grid ({samples.min_eigenvalue():.3e})")
    if np.min(samples.M_s) <= 0.0:
        raise MaterialError("M_s must be positive")


def arithmetic_mean_tensor(samples: CoefficientSamples) -> np.ndarray:
    """Voigt bound: grid mean of a."""
    return samples.grid.mean(samples.a)


def harmonic_mean_tensor(samples: CoefficientSamples) -> np.ndarray:
    """Reuss bound: inverse of the grid mean of a^-1."""
    return np.linalg.inv(samples.grid.mean(np.linalg.inv(samples.a)))
