"""Contraction constants and a priori error bounds for the series solutions.

All quantities are norms in the sup-over-time L1-in-size space on
``[0, T~] x [0, inf)``.  The module is pure arithmetic apart from
:func:`empirical_vs_bound`, which measures the actual truncation error of a
series against an exact solution by quadrature and sets it beside the bound.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import roots_legendre

from .aham import SeriesSolution
from .analytic import get_exact
from .expoly import TimeField

__all__ = [
    "ContractionParams",
    "ContractionWarning",
    "gamma_aggregation",
    "theta",
    "admissible_h",
    "apriori_bound",
    "gamma_cabe",
    "sup_l1_norm",
    "BoundRow",
    "BoundReport",
    "empirical_vs_bound",
]


class ContractionWarning(UserWarning):
    """A contraction constant is >= 1, so the theorem gives no guarantee."""


@dataclass(frozen=True)
class ContractionParams:
    norm_c0: float
    D: float
    tau0: float
    tau1: float
    sigma: float = 1.0
    eta: float = 2.0
    j: int = 1

    def __post_init__(self):
        if self.norm_c0 <= 0 or self.tau0 <= 0 or self.tau1 <= 0:
            raise ValueError("norm_c0, tau0 and tau1 must be positive")
        if self.tau0 > 1.0 / (2.0 * self.norm_c0) * (1 + 1e-12):
            raise ValueError(f"tau0 = {self.tau0} violates tau0 <= 1/(2 ||c0||) = {1 / (2 * self.norm_c0)}")
        lo, hi = self.D_interval
        if not lo * (1 - 1e-12) <= self.D <= hi * (1 + 1e-12):
            raise ValueError(f"D = {self.D} outside the admissible interval [{lo:.6g}, {hi:.6g}]")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def D_interval(self) -> tuple[float, float]:
        r = math.sqrt(max(0.0, 1.0 - 2.0 * self.tau0 * self.norm_c0))
        return (1.0 - r) / self.tau0, (1.0 + r) / self.tau0

    @property
    def T_tilde(self) -> float:
        return min(self.tau0, self.tau1)


def _flag(name: str, value: float) -> float:
    if value >= 1.0:
        warnings.warn(f"{name} = {value:.6g} >= 1: not a contraction", ContractionWarning, stacklevel=3)
    return value


def gamma_aggregation(p: ContractionParams) -> float:
    """``T e^{T D} (||c0|| + T D^2 / 2 + T D)`` with ``T = T~``."""
    T, D = p.T_tilde, p.D
    return _flag("gamma", T * math.exp(T * D) * (p.norm_c0 + 0.5 * T * D * D + T * D))


def gamma_cabe(p: ContractionParams) -> float:
    """Aggregation-breakage constant ``T e^{2TD}(||c0|| + 2D(tau0 D + 1) + (2 tau0 + 1) eta (j-1)!/sigma^j)``."""
    if p.j < 1 or p.eta <= 0:
        raise ValueError("need j >= 1 and eta > 0")
    T, D = p.T_tilde, p.D
    brk = (2.0 * p.tau0 + 1.0) * p.eta * math.factorial(p.j - 1) / p.sigma**p.j
    return _flag("gamma_2", T * math.exp(2.0 * T * D) * (p.norm_c0 + 2.0 * D * (p.tau0 * D + 1.0) + brk))


def theta(h: float, gamma: float) -> float:
    """``|1 + h| + gamma |h|``; warns when ``h`` lies outside ``[-1, 0)``."""
    if h == 0:
        raise ValueError("h must be non-zero")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if h > 0:
        warnings.warn("h > 0 would need gamma < -1 for a contraction", ContractionWarning, stacklevel=2)
    elif h < -1:
        warnings.warn("h < -1 is outside the admissible region [-1, 0)", ContractionWarning, stacklevel=2)
    return abs(1.0 + h) + gamma * abs(h)


def admissible_h(gamma: float) -> tuple[float, float]:
    """Half-open interval ``[-1, 0)`` on which ``theta(h, gamma) < 1`` for every ``gamma < 1``."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    return (-1.0, 0.0)


def apriori_bound(theta_: float, m: int, norm_mu1: float) -> float:
    """``theta^m ||mu_1|| / (1 - theta)``."""
    if not 0 < theta_ < 1:
        raise ValueError("theta must lie in (0, 1)")
    if m < 1:
        raise ValueError("m must be >= 1")
    return theta_**m * norm_mu1 / (1.0 - theta_)


# ---------------------------------------------------------------------------
# measured side
# ---------------------------------------------------------------------------

_S_MAX = 60.0
_N_TAU = 64


def _s_quadrature(s_max: float = _S_MAX, panels: int = 120, order: int = 16):
    g, w = roots_legendre(order)
    edges = np.linspace(0.0, s_max, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (mid + half * g).ravel(), (half * w).ravel()


def sup_l1_norm(values_fn, t_max: float, n_tau: int = _N_TAU, s_max: float = _S_MAX) -> float:
    """``max_tau int_0^s_max |f(s, tau)| ds`` over ``n_tau`` equispaced times in ``[0, t_max]``."""
    s, w = _s_quadrature(s_max)
    best = 0.0
    for t in np.linspace(0.0, t_max, n_tau):
        best = max(best, float(np.sum(w * np.abs(values_fn(s, t)))))
    return best


@dataclass(frozen=True)
class BoundRow:
    k: int
    measured: float
    bound: float
    gamma: float
    theta: float

    @property
    def ok(self) -> bool:
        return self.measured <= self.bound


@dataclass
class BoundReport:
    rows: list
    norm_mu1: float
    h: float
    T_tilde: float
    preconditions_ok: bool

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def violations(self) -> list[str]:
        out = []
        for r in self.rows:
            if not r.ok:
                kind = "solver" if self.preconditions_ok else "theorem-precondition"
                out.append(f"k={r.k}: measured {r.measured:.3e} > bound {r.bound:.3e} ({kind} failure)")
        return out

    def to_json(self) -> str:
        return json.dumps({
            "h": self.h, "T_tilde": self.T_tilde, "norm_mu1": self.norm_mu1,
            "preconditions_ok": self.preconditions_ok,
            "rows": [{"k": r.k, "measured": r.measured, "bound": r.bound, "gamma": r.gamma, "theta": r.theta}
                     for r in self.rows],
        }, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "measured", "bound", "gamma", "theta"])
        for r in self.rows:
            w.writerow([r.k] + [f"{v:.9g}" for v in (r.measured, r.bound, r.gamma, r.theta)])
        return buf.getvalue()


def empirical_vs_bound(sol: SeriesSolution, params: ContractionParams, exact_id: str,
                       ks: Sequence[int] = (2, 3, 4), gamma: Optional[float] = None) -> BoundReport:
    """Measured ``sup_tau ||c - psi_k||_1`` next to ``theta^k ||mu_1|| / (1 - theta)``.

    ``gamma`` defaults to the aggregation constant of ``params``.  Times are
    sampled on ``[0, T~]``.  A bound violation with ``h`` outside ``[-1, 0)``
    or ``gamma >= 1`` is reported as a precondition failure.
    """
    exact = get_exact(exact_id)
    if max(ks) > sol.K:
        raise ValueError(f"solution has only K = {sol.K} iterates")
    g = gamma_aggregation(params) if gamma is None else gamma
    T = params.T_tilde
    pre_ok = (-1.0 <= sol.h < 0.0) and g < 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContractionWarning)
        th = theta(sol.h, min(max(g, 1e-300), 1 - 1e-16)) if 0 < g < 1 else abs(1 + sol.h) + g * abs(sol.h)
    mu1: TimeField = sol.iterates[1]
    norm_mu1 = sup_l1_norm(lambda s, t: mu1.evaluate(s, t), T)
    rows = []
    for k in ks:
        psi = sol.partial_sum(k + 1)
        measured = sup_l1_norm(lambda s, t: psi.evaluate(s, t) - exact(s, t), T)
        bound = th**k * norm_mu1 / (1.0 - th) if th < 1 else math.inf
        rows.append(BoundRow(int(k), measured, bound, g, th))
    return BoundReport(rows, norm_mu1, sol.h, T, pre_ok)
