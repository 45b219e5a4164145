"""Exception hierarchy for homomag.

Every error carries the exit code the CLI reports for it.
"""

from typing import Optional


class HomomagError(Exception):
    """Base class for all homomag errors."""

    exit_code = 1


class ParseError(HomomagError, ValueError):
    """Malformed config line or unknown key."""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        location = f"line {line}" if line is not None else "config"
        if key:
            location += f", key '{key}'"
        super().__init__(f"{location}: {message}")


class ConfigValidationError(HomomagError, ValueError):
    """A config value violates a model constraint."""

    exit_code = 3

    def __init__(self, message: str, constraint: Optional[str] = None, line: Optional[int] = None):
        self.constraint = constraint
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class MaterialError(HomomagError, ValueError):
    """Material coefficients fail coercivity or positivity."""

    exit_code = 3


class GridError(HomomagError, ValueError):
    """Unsupported resolution or arrays that do not match a grid."""

    exit_code = 3


class KernelError(HomomagError, ValueError):
    """Stray-field kernel missing, or built for another grid."""

    exit_code = 3


class TimeMismatchError(HomomagError, ValueError):
    """Fields combined at different snapshot times."""

    exit_code = 3


class ProfileError(HomomagError, ValueError):
    """Unknown initial profile or a profile that is not unit length."""

    exit_code = 3


class CompatibilityViolated(HomomagError, RuntimeError):
    """Right-hand side of a singular problem has nonzero mean."""

    exit_code = 4

    def __init__(self, mean: float, norm: float, label: str = "rhs"):
        self.mean = mean
        self.norm = norm
        super().__init__(
            f"{label}: compatibility violated, mean {mean:.3e} with norm {norm:.3e}"
        )


class NoConvergence(HomomagError, RuntimeError):
    """Iterative solve hit its iteration cap."""

    exit_code = 4

    def __init__(self, iterations: int, residual: float, label: str = "pcg"):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"{label}: no convergence after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


class InnerSolveDiverged(HomomagError, RuntimeError):
    """Inner linear solve of a time step failed."""

    exit_code = 4


class RenormalizationDefectTooLarge(HomomagError, RuntimeError):
    """Pre-projection length deviated too far from one; the step is too large."""

    exit_code = 4

    def __init__(self, defect: float, limit: float):
        self.defect = defect
        super().__init__(
            f"renormalization defect {defect:.3e} exceeds {limit:.1e}; reduce tau"
        )


class EnergyMonotonicityViolated(HomomagError, RuntimeError):
    """Energy increased by more than the logged per-step bound."""

    exit_code = 6

    def __init__(self, step: int, increase: float, bound: float):
        self.step = step
        self.increase = increase
        self.bound = bound
        super().__init__(
            f"energy increased by {increase:.3e} at step {step} (bound {bound:.3e})"
        )


class TransferError(HomomagError, ValueError):
    """Interpolation asked to extrapolate outside the unit domain."""

    exit_code = 4


class InsufficientPoints(HomomagError, ValueError):
    """Rate fit needs at least three valid points."""

    exit_code = 4


class MissingArtifact(HomomagError, FileNotFoundError):
    """A required input container or file does not exist."""

    exit_code = 5


class ContainerFormatError(HomomagError, ValueError):
    """Binary field container is corrupt or has the wrong version."""

    exit_code = 5
