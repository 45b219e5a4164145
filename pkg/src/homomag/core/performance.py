"""Memory guardrails and parallel row execution."""

import os
import warnings
from typing import Any, Callable, Dict, List, Sequence

import pandas as pd
import psutil
from joblib import Parallel, delayed

# float64 arrays alive per cell during an LLG step (m, H parts, PCG vectors, spline scratch)
ARRAYS_PER_CELL = 60
BYTES_PER_FLOAT = 8


def get_memory_usage() -> float:
    """Get current memory usage in MB."""
    process = psutil.Process(os.getpid())
    return process.memory_info().rss / 1024 / 1024


def estimate_grid_memory(n: int, N: int, mu0: float = 0.0) -> float:
    """Rough peak memory of one simulation on an N^n grid, in MB."""
    cells = N ** n
    total = ARRAYS_PER_CELL * 3 * cells
    if mu0 > 0.0:
        # padded kernel, its spectrum and the convolution scratch
        total += 4 * (2 * (N + 2)) ** n
    return total * BYTES_PER_FLOAT / 1024 / 1024


def performance_guardrails(plan: pd.DataFrame, memory_cap_mb: float = 4096,
                           workers: int = 1) -> Dict[str, float]:
    """Warn when the planned rows would not fit under the memory cap.

    Args:
        plan: Planned sweep rows with an ``est_memory_mb`` column
        memory_cap_mb: Cap in MB
        workers: Rows running at the same time

    Returns:
        Dict with current RSS, the estimated peak and the cap
    """
    current = get_memory_usage()
    largest = sorted(plan["est_memory_mb"], reverse=True)[:max(1, workers)]
    estimated = current + float(sum(largest))
    if estimated > memory_cap_mb:
        warnings.warn(f"Estimated memory {estimated:.1f}MB exceeds cap {memory_cap_mb}MB; "
                      f"consider fewer workers")
    return {"rss_mb": current, "estimated_peak_mb": estimated, "memory_cap_mb": memory_cap_mb}


def parallel_map(fn: Callable[..., Any], arguments: Sequence[tuple], n_jobs: int = 1) -> List[Any]:
    """Apply ``fn`` to every argument tuple; results keep the input order."""
    if n_jobs == 1 or len(arguments) <= 1:
        return [fn(*args) for args in arguments]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*args) for args in arguments)
