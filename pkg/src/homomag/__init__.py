"""homomag: periodic homogenization and corrector toolkit for Landau-Lifshitz-Gilbert dynamics."""

__version__ = "0.1.0"
__author__ = "homomag developers"
__description__ = "Cell problems, eps and homogenized LLG solvers, correctors and convergence sweeps"
