"""Reference solvers for the aggregation(-breakage) equation.

Two independent numerical oracles live here:

* :func:`fvm_solve` -- a mass-conserving sectional finite-volume scheme for
  pure aggregation.  Cell masses evolve through a gain/loss double sum over
  cell pairs; the newborn mass ``x_i + x_j`` is assigned to the cell that
  contains it, so total mass is conserved to round-off.  Time stepping is
  explicit Heun.  The pair loop runs in a compiled extension when it is
  available and in numpy otherwise (see :data:`BACKEND`).
* :func:`fine_reference` -- a method-of-lines solver on a fine uniform grid
  with trapezoidal quadrature for every integral, integrated with a
  high-order adaptive ODE solver and Richardson-extrapolated in the grid
  spacing.  It handles power-law breakage and reaches ~1e-10 accuracy,
  which is what the truncated-series error tables need.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate, signal
from scipy.special import roots_legendre

from .kernels import BreakageSpec, SeparableKernel, kernel_evaluate

log = logging.getLogger(__name__)

if os.environ.get("AHAMPBE_PURE_PYTHON"):
    from ._fvm_py import pair_mass_rates

    BACKEND = "python"
else:
    try:
        from ._fvm_core import pair_mass_rates

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fvm_py import pair_mass_rates

        BACKEND = "python"

__all__ = [
    "SizeGrid",
    "CellSolution",
    "build_grid",
    "fvm_solve",
    "FVMStepError",
    "ReferenceSolution",
    "fine_reference",
    "l1_distance",
    "BACKEND",
]


class FVMStepError(RuntimeError):
    """The explicit scheme blew up; reduce the time step."""


@dataclass(frozen=True)
class SizeGrid:
    edges: np.ndarray
    kind: str = "geometric"

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if len(e) < 17:
            raise ValueError("a size grid needs at least 16 cells")
        if np.any(np.diff(e) <= 0) or e[0] <= 0:
            raise ValueError("edges must be positive and strictly increasing")
        object.__setattr__(self, "edges", e)

    @property
    def cells(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def points(self) -> np.ndarray:
        e = self.edges
        if self.kind == "geometric":
            return np.sqrt(e[1:] * e[:-1])
        return 0.5 * (e[1:] + e[:-1])


def build_grid(s_min: float, s_max: float, cells: int, kind: str = "geometric") -> SizeGrid:
    if not 0 < s_min < s_max:
        raise ValueError("need 0 < s_min < s_max")
    if cells < 16:
        raise ValueError("cells must be >= 16")
    if kind == "geometric":
        r = (s_max / s_min) ** (1.0 / cells)
        edges = s_min * r ** np.arange(cells + 1)
        edges[-1] = s_max
    elif kind == "uniform":
        edges = np.linspace(s_min, s_max, cells + 1)
    else:
        raise ValueError(f"unknown grid kind {kind!r}")
    return SizeGrid(edges, kind)


@dataclass
class CellSolution:
    grid: SizeGrid
    values: np.ndarray
    time: float
    mass_initial: float = 0.0
    mass_leak: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def points(self):
        return self.grid.points

    def moment(self, j: int) -> float:
        return float(np.sum(self.values * self.grid.widths * self.points**j))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "density"])
        for s, v in zip(self.points, self.values):
            w.writerow([f"{s:.9g}", f"{v:.9g}"])
        return buf.getvalue()


def _cell_masses(grid: SizeGrid, c0: Callable, order: int = 8) -> np.ndarray:
    g, gw = roots_legendre(order)
    e = grid.edges
    half = 0.5 * grid.widths[:, None]
    mid = 0.5 * (e[1:, None] + e[:-1, None])
    ss = mid + half * g[None, :]
    return np.sum(half * gw[None, :] * ss * np.asarray(c0(ss), dtype=float), axis=1)


def fvm_solve(kernel, c0: Callable, grid: SizeGrid, tau_end: float, dt_cfl: float = 0.01,
              max_steps: int = 1_000_000) -> CellSolution:
    """Advance the sectional aggregation scheme from 0 to ``tau_end``.

    ``kernel`` is a :class:`SeparableKernel` or any vectorized ``w(s, x)``.
    The step is ``min(dt_cfl, 0.5 / max_i sum_j w_ij N_j(0))``.  Returns
    number densities at the representative cell points; mass carried past
    the last edge is accumulated in ``mass_leak``.
    """
    if tau_end <= 0:
        raise ValueError("tau_end must be positive")
    x = grid.points
    n = grid.cells
    W = np.ascontiguousarray(kernel_evaluate(kernel, x[:, None], x[None, :]) if isinstance(kernel, SeparableKernel)
                             else kernel(x[:, None], x[None, :]), dtype=float)
    born = x[:, None] + x[None, :]
    target = np.searchsorted(grid.edges, born, side="right") - 1
    target[born >= grid.edges[-1]] = -1
    target = np.ascontiguousarray(target, dtype=np.int64)

    mass = _cell_masses(grid, c0)
    m0 = float(mass.sum())
    N0 = mass / x
    max_rate = float(np.max(W @ N0))
    dt = min(dt_cfl, 0.5 / max_rate) if max_rate > 0 else dt_cfl
    if tau_end / dt > max_steps:
        raise FVMStepError(f"step {dt:.3g} would need more than {max_steps} steps to reach tau={tau_end}")
    k1 = np.empty(n)
    k2 = np.empty(n)
    leak = 0.0
    t = 0.0
    steps = 0
    while t < tau_end - 1e-14:
        h = min(dt, tau_end - t)
        l1 = pair_mass_rates(mass, x, W, target, k1)
        trial = mass + h * k1
        np.maximum(trial, 0.0, out=trial)
        l2 = pair_mass_rates(trial, x, W, target, k2)
        mass = mass + 0.5 * h * (k1 + k2)
        leak += 0.5 * h * (l1 + l2)
        mass[(mass < 0) & (mass > -1e-12)] = 0.0
        if not np.all(np.isfinite(mass)) or np.max(np.abs(mass)) > 1e12:
            raise FVMStepError(f"instability at t={t:.4g}; reduce dt (dt={h:.3g})")
        t += h
        steps += 1
    dens = mass / x / grid.widths
    meta = {"dt": dt, "steps": steps, "backend": BACKEND, "cells": n, "kind": grid.kind,
            "s_min": float(grid.edges[0]), "s_max": float(grid.edges[-1])}
    return CellSolution(grid, dens, float(tau_end), m0, leak, meta)


def l1_distance(sol: CellSolution, exact: Callable) -> float:
    """``sum |c_i - exact(x_i)| * width_i`` over the cells."""
    ref = np.asarray(exact(sol.points, sol.time), dtype=float)
    return float(np.sum(np.abs(sol.values - ref) * sol.grid.widths))


# ---------------------------------------------------------------------------
# fine reference
# ---------------------------------------------------------------------------


def _rhs_factory(s, ds, kernel: SeparableKernel, breakage: Optional[BreakageSpec]):
    terms = [(lam, float(a), float(b)) for lam, a, b in kernel.terms]
    spow = {}
    for _, a, b in terms:
        for q in (a, b):
            spow.setdefault(q, s**q)

    def rhs(_t, c):
        out = np.zeros_like(c)
        for lam, a, b in terms:
            f = spow[a] * c
            g = spow[b] * c
            conv = signal.fftconvolve(f, g)[: len(c)]
            conv = ds * (conv - 0.5 * (f * g[0] + f[0] * g))
            tot = ds * (g.sum() - 0.5 * (g[0] + g[-1]))
            out += 0.5 * lam * conv - lam * f * tot
        if breakage is not None:
            q = breakage.sigma_s * s ** (breakage.j - breakage.i) * c
            cum = np.concatenate([[0.0], np.cumsum(0.5 * ds * (q[1:] + q[:-1]))])
            out += breakage.eta * s ** (breakage.i - 1) * (cum[-1] - cum) - breakage.sigma_s * s**breakage.j * c
        return out

    return rhs


def _mol_solve(kernel, breakage, c0, times, ds, s_max, rtol):
    n = int(round(s_max / ds))
    s = np.arange(n + 1) * ds
    sol = integrate.solve_ivp(
        _rhs_factory(s, ds, kernel, breakage), (0.0, max(times)), np.asarray(c0(s), dtype=float),
        method="DOP853", rtol=rtol, atol=1e-15, t_eval=sorted(times),
    )
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return s, {t: sol.y[:, i] for i, t in enumerate(sol.t)}


@dataclass
class ReferenceSolution:
    s: np.ndarray
    values: dict
    meta: dict

    def __call__(self, s, tau):
        """Density at ``s`` for one of the solved times (cubic interpolation off-node)."""
        key = min(self.values, key=lambda t: abs(t - float(tau)))
        if abs(key - float(tau)) > 1e-12:
            raise KeyError(f"reference was not solved at tau={tau}")
        spline = interpolate.CubicSpline(self.s, self.values[key])
        return spline(np.asarray(s, dtype=float))[()]


def fine_reference(kernel: SeparableKernel, c0: Callable, times, breakage: Optional[BreakageSpec] = None,
                   ds: float = 0.005, s_max: float = 30.0, rtol: float = 1e-12) -> ReferenceSolution:
    """High-accuracy density on the nodes ``k * ds`` at each of ``times``.

    Kernel exponents must be non-negative (trapezoidal quadrature of an
    integrable singularity would spoil the extrapolation).
    """
    if any(float(a) < 0 or float(b) < 0 for _, a, b in kernel.terms):
        raise ValueError("fine_reference needs kernel exponents >= 0")
    times = sorted({float(t) for t in times})
    s1, coarse = _mol_solve(kernel, breakage, c0, times, ds, s_max, rtol)
    _, fine = _mol_solve(kernel, breakage, c0, times, ds / 2, s_max, rtol)
    values = {t: (4.0 * fine[t][::2] - coarse[t]) / 3.0 for t in times}
    meta = {"ds": ds, "s_max": s_max, "rtol": rtol, "richardson": True}
    return ReferenceSolution(s1, values, meta)
