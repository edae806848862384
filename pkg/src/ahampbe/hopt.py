"""Discrete squared residual and convergence-control parameter selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aham import ProblemSpec, SeriesSolution, iterate
from .expoly import AlgebraError, TimeField, time_differentiate
from .pbe_ops import full_operator

__all__ = [
    "ResidualGrid",
    "residual_field",
    "residual",
    "e_of_h",
    "optimize_h",
    "HOptReport",
]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ResidualGrid:
    s_nodes: np.ndarray
    t_nodes: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s_nodes, dtype=float)
        t = np.asarray(self.t_nodes, dtype=float)
        if len(s) != len(t) or len(s) < 2:
            raise ValueError("residual grid needs K+1 >= 2 nodes on both axes")
        if np.any(np.diff(s) <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        object.__setattr__(self, "s_nodes", s)
        object.__setattr__(self, "t_nodes", t)

    @property
    def K(self) -> int:
        return len(self.s_nodes) - 1

    @classmethod
    def uniform(cls, K: int = 20, s_max: float = 10.0, t_max: float = 1.0, s_min: float = 0.0) -> "ResidualGrid":
        return cls(np.linspace(s_min, s_max, K + 1), np.linspace(0.0, t_max, K + 1))

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "s_min": float(self.s_nodes[0]),
            "s_max": float(self.s_nodes[-1]),
            "t_max": float(self.t_nodes[-1]),
        }


def residual_field(problem: ProblemSpec, sol: SeriesSolution, n_terms: Optional[int] = None) -> TimeField:
    """``d psi/dtau + L psi + M psi`` as a closed-form time field."""
    psi = sol.partial_sum(n_terms)
    return time_differentiate(psi) + full_operator(problem.split, psi)


def residual(problem: ProblemSpec, sol: SeriesSolution, s, tau, n_terms: Optional[int] = None):
    return residual_field(problem, sol, n_terms).evaluate(s, tau)


def _grid_sum(field_: TimeField, grid: ResidualGrid) -> float:
    S, T = np.meshgrid(grid.s_nodes, grid.t_nodes, indexing="ij")
    res = field_.evaluate(S, T)
    return float(np.sum(res**2)) / grid.K**2


def e_of_h(problem: ProblemSpec, grid: ResidualGrid, K_terms: int, h: float, mode: str = "aham") -> float:
    """``(1/K^2) sum_i sum_j Res(s_i, tau_j)^2`` for the order-``K_terms`` series."""
    if h == 0:
        raise ValueError("h must be non-zero")
    sol = iterate(problem, h, K_terms, mode)
    return _grid_sum(residual_field(problem, sol), grid)


@dataclass
class HOptReport:
    h_star: float
    e_star: float
    bracket: tuple
    grid: dict
    K_terms: int
    candidates: list = field(default_factory=list)
    refinement: list = field(default_factory=list)

    @property
    def outside_safe_region(self) -> bool:
        return self.h_star < -1.0

    def to_dict(self) -> dict:
        return {
            "h_star": self.h_star,
            "E_star": self.e_star,
            "bracket": list(self.bracket),
            "grid": self.grid,
            "K_terms": self.K_terms,
            "h_below_minus_one": self.outside_safe_region,
            "candidates": [{"h": h, "E": e} for h, e in self.candidates],
            "refinement": [{"h": h, "E": e} for h, e in self.refinement],
        }


def _better(e_new, h_new, e_old, h_old) -> bool:
    if e_new < e_old:
        return True
    return e_new == e_old and abs(h_new) < abs(h_old)


def optimize_h(problem: ProblemSpec, grid: ResidualGrid, K_terms: int, bracket=(-2.0, -1e-3),
               n_scan: int = 41, tol: float = 1e-4, mode: str = "aham") -> HOptReport:
    """Coarse scan of ``E(h)`` then golden-section refinement around the best node.

    The scan is ``n_scan`` equispaced nodes plus ``h = -1`` when it lies in
    the bracket.  Ties resolve to the smallest ``|h|``.  Candidates whose
    series cannot be built (algebra errors) are recorded with ``E = inf``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi or n_scan < 3:
        raise ValueError("degenerate h bracket")

    cache: dict[float, float] = {}
    failures: list[str] = []

    def E(h):
        if h not in cache:
            try:
                cache[h] = e_of_h(problem, grid, K_terms, h, mode)
            except AlgebraError as exc:
                failures.append(str(exc))
                cache[h] = math.inf
            if not math.isfinite(cache[h]):
                cache[h] = math.inf
        return cache[h]

    hs = np.linspace(lo, hi, n_scan)
    if lo < -1.0 < hi:  # the classic choice is always a candidate, so E(h*) <= E(-1)
        hs = np.unique(np.append(hs, -1.0))
    scan = [(float(h), E(float(h))) for h in hs]
    best_i = None
    for i, (h, e) in enumerate(scan):
        if best_i is None or _better(e, h, scan[best_i][1], scan[best_i][0]):
            best_i = i
    h_best, e_best = scan[best_i]
    if not math.isfinite(e_best):
        why = f": {failures[0]}" if failures else ""
        raise AlgebraError(f"E(h) could not be evaluated at any scan candidate{why}")

    a = scan[max(best_i - 1, 0)][0]
    b = scan[min(best_i + 1, len(scan) - 1)][0]
    refinement = []
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = E(x1), E(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = E(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = E(x2)
        for h, e in ((x1, f1), (x2, f2)):
            if _better(e, h, e_best, h_best):
                h_best, e_best = h, e
        refinement.append((h_best, e_best))
    return HOptReport(h_best, e_best, (lo, hi), grid.to_dict(), K_terms, scan, refinement)
