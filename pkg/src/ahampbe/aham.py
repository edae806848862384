"""Series solutions by the accelerated homotopy analysis recursion.

With ``psi_k = mu_0 + ... + mu_k`` the accelerated recursion reads::

    mu_0 = c0
    mu_1 = h * int_0^tau (L mu_0 + H_0)
    mu_k = int_0^tau (d mu_{k-1}/dtau + h [d mu_{k-1}/dtau + L mu_{k-1} + H_{k-1}])

where ``H_k = M(psi_k) - (H_0 + ... + H_{k-1})``.  The classic mode swaps
``H_k`` for the Cauchy-product homotopy polynomial
``Q_k = sum_{m+n=k} B(mu_m, mu_n)``; at ``h = -1`` it reproduces the
Adomian / homotopy-perturbation iterates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .expoly import (
    AlgebraError,
    ExpPoly,
    TermCountError,
    TimeField,
    time_differentiate,
    time_integrate,
)
from .pbe_ops import OperatorSplit, aggregation_M, breakage_L

__all__ = [
    "ProblemSpec",
    "SeriesSolution",
    "HePolynomialLedger",
    "accelerated_he",
    "iterate_aham",
    "iterate_classic",
    "iterate",
    "evaluate_solution",
    "solution_moment",
    "solution_to_json",
    "solution_from_json",
    "DEFAULT_TERM_CAP",
]

DEFAULT_TERM_CAP = 512


@dataclass(frozen=True)
class ProblemSpec:
    c0: ExpPoly
    split: OperatorSplit
    t_max: float
    label: str = ""

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")


@dataclass
class HePolynomialLedger:
    """Accelerated He polynomials ``H_0 .. H_{k}`` plus their running sum."""

    H_list: list = field(default_factory=list)
    cumulative: TimeField = field(default_factory=TimeField.zero)

    def append(self, H: TimeField):
        self.H_list.append(H)
        self.cumulative = self.cumulative + H


@dataclass(frozen=True)
class SeriesSolution:
    iterates: tuple
    h: float
    mode: str
    K: int

    def partial_sum(self, n_terms: Optional[int] = None) -> TimeField:
        """``psi`` with ``n_terms`` iterates (all of them by default)."""
        n = self.K + 1 if n_terms is None else n_terms
        if not 1 <= n <= self.K + 1:
            raise ValueError(f"n_terms must be in 1..{self.K + 1}")
        out = TimeField.zero()
        for mu in self.iterates[:n]:
            out = out + mu
        return out


def _check_cap(F: TimeField, cap: int, index: int):
    n = F.max_terms_per_coefficient()
    if n > cap:
        raise TermCountError(f"iterate {index} has {n} terms in one time coefficient (cap {cap})")


def accelerated_he(split: OperatorSplit, iterates, ledger: HePolynomialLedger) -> TimeField:
    """Next accelerated He polynomial; appends it to ``ledger`` and returns it."""
    k = len(ledger.H_list)
    if len(iterates) < k + 1:
        raise ValueError(f"need mu_0..mu_{k} to form H_{k}")
    psi = TimeField.zero()
    for mu in iterates[: k + 1]:
        psi = psi + mu
    H = aggregation_M(split, psi) - ledger.cumulative
    ledger.append(H)
    return H


def _homotopy_polynomial(split: OperatorSplit, iterates, k: int) -> TimeField:
    out = TimeField.zero()
    for m in range(k + 1):
        out = out + aggregation_M(split, iterates[m], iterates[k - m])
    return out


def iterate(problem: ProblemSpec, h: float, K: int, mode: Literal["aham", "classic"] = "aham",
            term_cap: int = DEFAULT_TERM_CAP) -> SeriesSolution:
    if h == 0:
        raise ValueError("convergence-control parameter h must be non-zero")
    if K < 1:
        raise ValueError("K must be >= 1")
    if mode not in ("aham", "classic"):
        raise ValueError(f"unknown mode {mode!r}")
    split = problem.split
    mus = [TimeField.lift(problem.c0)]
    ledger = HePolynomialLedger()
    for k in range(1, K + 1):
        prev = mus[k - 1]
        try:
            if mode == "aham":
                nonlin = accelerated_he(split, mus, ledger)
            else:
                nonlin = _homotopy_polynomial(split, mus, k - 1)
            dprev = time_differentiate(prev)
            bracket = dprev + breakage_L(split, prev) + nonlin
            mu = time_integrate(dprev + bracket * h)
        except AlgebraError as exc:
            raise type(exc)(f"while forming iterate {k}: {exc}") from exc
        _check_cap(mu, term_cap, k)
        mus.append(mu)
    return SeriesSolution(tuple(mus), float(h), mode, K)


def iterate_aham(problem: ProblemSpec, h: float, K: int, term_cap: int = DEFAULT_TERM_CAP) -> SeriesSolution:
    """Accelerated iterates ``mu_0 .. mu_K`` for a fixed ``h``."""
    return iterate(problem, h, K, "aham", term_cap)


def iterate_classic(problem: ProblemSpec, h: float, K: int, term_cap: int = DEFAULT_TERM_CAP) -> SeriesSolution:
    """Classic homotopy-polynomial iterates (ADM/HPM at ``h = -1``)."""
    return iterate(problem, h, K, "classic", term_cap)


def evaluate_solution(sol: SeriesSolution, s, tau, n_terms: Optional[int] = None):
    return sol.partial_sum(n_terms).evaluate(s, tau)


def solution_moment(sol: SeriesSolution, j: int, tau, n_terms: Optional[int] = None):
    """Exact size moment of the truncated series at time(s) ``tau``."""
    coeffs = sol.partial_sum(n_terms).moments(j)
    return np.polynomial.polynomial.polyval(np.asarray(tau, dtype=float), coeffs)[()]


# JSON export: each iterate is a list of [degree, [[coeff, pnum, pden, rnum, rden], ...]]


def _field_to_list(F: TimeField):
    out = []
    for k, f in F.coeffs:
        out.append([k, [[x.coeff, x.power.numerator, x.power.denominator, x.rate.numerator, x.rate.denominator]
                         for x in f.terms]])
    return out


def _field_from_list(data) -> TimeField:
    from fractions import Fraction

    coeffs = {}
    for k, terms in data:
        coeffs[int(k)] = ExpPoly([(c, Fraction(pn, pd), Fraction(rn, rd)) for c, pn, pd, rn, rd in terms])
    return TimeField(coeffs)


def solution_to_json(sol: SeriesSolution) -> str:
    return json.dumps(
        {"h": sol.h, "mode": sol.mode, "K": sol.K, "iterates": [_field_to_list(mu) for mu in sol.iterates]},
        indent=1,
    )


def solution_from_json(text: str) -> SeriesSolution:
    d = json.loads(text)
    return SeriesSolution(tuple(_field_from_list(x) for x in d["iterates"]), float(d["h"]), d["mode"], int(d["K"]))
