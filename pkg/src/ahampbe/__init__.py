"""Accelerated homotopy-analysis series solutions of population balance equations.

The series are built in closed form on exponential-polynomials
(:mod:`ahampbe.expoly`), with the aggregation and breakage operators in
:mod:`ahampbe.pbe_ops`, the recursions in :mod:`ahampbe.aham` and the
convergence-control parameter selection in :mod:`ahampbe.hopt`.  Exact
solutions, a finite-volume reference solver and the contraction bounds
live in :mod:`ahampbe.analytic`, :mod:`ahampbe.fvm` and
:mod:`ahampbe.bounds`; :mod:`ahampbe.cli` runs the bundled examples.
"""

from .aham import (
    ProblemSpec,
    SeriesSolution,
    evaluate_solution,
    iterate,
    iterate_aham,
    iterate_classic,
    solution_moment,
)
from .analytic import exact_constant, exact_moments, exact_product, exact_sum, get_exact
from .expoly import AlgebraError, ExpPoly, TimeField
from .hopt import ResidualGrid, e_of_h, optimize_h
from .kernels import BreakageSpec, SeparableKernel, builtin_kernel
from .pbe_ops import OperatorSplit

__version__ = "0.1.0"

__all__ = [
    "AlgebraError",
    "BreakageSpec",
    "ExpPoly",
    "OperatorSplit",
    "ProblemSpec",
    "ResidualGrid",
    "SeparableKernel",
    "SeriesSolution",
    "TimeField",
    "builtin_kernel",
    "e_of_h",
    "evaluate_solution",
    "exact_constant",
    "exact_moments",
    "exact_product",
    "exact_sum",
    "get_exact",
    "iterate",
    "iterate_aham",
    "iterate_classic",
    "optimize_h",
    "solution_moment",
]
