"""Exact solutions of the aggregation equation for ``c0 = exp(-s)``.

Covers the constant, sum and (pre-gelation) product kernels, plus the
series for the modified Bessel function ``I_1`` that the sum-kernel
solution needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

__all__ = [
    "ExactSolution",
    "exact_constant",
    "bessel_i1",
    "exact_sum",
    "exact_product",
    "exact_moments",
    "EXACT_SOLUTIONS",
    "get_exact",
]


def exact_constant(s, tau):
    """``4 exp(-2s/(tau+2)) / (tau+2)^2``."""
    s = np.asarray(s, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return (4.0 * np.exp(-2.0 * s / (tau + 2.0)) / (tau + 2.0) ** 2)[()]


def _i1_series(x: float, over_x: bool) -> float:
    # sum (x/2)^(2k+1) / (k! (k+1)!), optionally divided by x
    half = 0.5 * x
    term = 0.5 if over_x else half
    total = term
    q = half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + 1))
        total += term
        if term < 1e-16 * total or term == 0.0:
            return total


def bessel_i1(x):
    """Modified Bessel function of the first kind, order one, by its power series."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("bessel_i1 is implemented for x >= 0")
    out = np.array([_i1_series(float(v), False) for v in x.reshape(-1)]).reshape(x.shape)
    return out[()]


def _scaled_i1_over_x(x: float) -> float:
    """``exp(-x) I1(x) / x`` without overflow for large ``x``."""
    if x < 600.0:
        half = 0.5 * x
        term = 0.5 * math.exp(-x)
        total = term
        q = half * half
        k = 0
        while True:
            k += 1
            ratio = q / (k * (k + 1))
            term *= ratio
            total += term
            if ratio < 1.0 and term <= 1e-17 * total or term == 0.0:
                return total
    k = np.arange(int(x) + 40 * int(math.sqrt(x)) + 40)
    logs = (2 * k + 1) * math.log(0.5 * x) - special.gammaln(k + 1) - special.gammaln(k + 2) - math.log(x) - x
    return float(np.exp(special.logsumexp(logs)))


def exact_sum(s, tau):
    """Sum-kernel solution ``exp((e^-tau - 2)s - tau) I1(2 q s) / (q s)``, ``q = sqrt(1 - e^-tau)``.

    Written as ``2 exp(... + x) * [exp(-x) I1(x)/x]`` with ``x = 2 q s`` so the
    removable singularities at ``s = 0`` and ``tau = 0`` need no special
    casing and large ``s`` does not overflow.
    """
    s_arr, t_arr = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(tau, dtype=float))
    out = np.empty(s_arr.shape)
    for idx in np.ndindex(s_arr.shape):
        sv, tv = s_arr[idx], t_arr[idx]
        q = math.sqrt(-math.expm1(-tv))
        x = 2.0 * q * sv
        out[idx] = 2.0 * math.exp((math.exp(-tv) - 2.0) * sv - tv + x) * _scaled_i1_over_x(x)
    return out[()]


def _product_point(s: float, tau: float) -> float:
    # term_k = exp(-(1+tau)s) y^k / ((k+1)! (2k+1)!), y = tau s^3; the sequence in k is
    # log-concave, so summation stops once it is past its peak and negligible
    y = tau * s**3
    if (1.0 + tau) * s < 600.0:
        term = math.exp(-(1.0 + tau) * s)
        total = term
        k = 0
        while True:
            k += 1
            ratio = y / ((k + 1) * (2 * k) * (2 * k + 1))
            term *= ratio
            total += term
            if ratio < 1.0 and term <= 1e-17 * total or term == 0.0:
                return total
    # far tail: sum in log space around the peak term
    k_max = int(2.0 * y ** (1.0 / 3.0)) + 40
    k = np.arange(k_max + 1)
    logs = k * math.log(y) - special.gammaln(k + 2) - special.gammaln(2 * k + 2) - (1.0 + tau) * s
    return float(np.exp(special.logsumexp(logs)))


def exact_product(s, tau):
    """Product-kernel series solution, evaluated for ``0 <= tau <= 1``.

    For this initial condition the second moment blows up at ``tau = 1/2``
    (gelation); beyond it the formula no longer conserves mass, and moments
    computed from it near ``tau = 1/2`` converge slowly because the tail
    decays only like ``exp(-(1 + tau - 3 (tau/4)^{1/3}) s)``.
    """
    s_arr, t_arr = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(tau, dtype=float))
    out = np.empty(s_arr.shape)
    for idx in np.ndindex(s_arr.shape):
        sv, tv = s_arr[idx], t_arr[idx]
        if tv < 0 or tv > 1 + 1e-12:
            raise ValueError("product-kernel solution is only used for 0 <= tau <= 1")
        out[idx] = _product_point(sv, tv)
    return out[()]


def _quad_moment(fn, j, tau, s_cut):
    val, _ = integrate.quad(lambda x: x**j * float(fn(x, tau)), 0.0, s_cut, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


@dataclass(frozen=True)
class ExactSolution:
    id: str
    evaluator: Callable
    kernel: str
    tolerance: float = 1e-14

    def __call__(self, s, tau):
        return self.evaluator(s, tau)


EXACT_SOLUTIONS = {
    "constant_exp": ExactSolution("constant_exp", exact_constant, "constant"),
    "sum_exp": ExactSolution("sum_exp", exact_sum, "sum"),
    "product_exp": ExactSolution("product_exp", exact_product, "product"),
}


def get_exact(id: str) -> ExactSolution:
    try:
        return EXACT_SOLUTIONS[id]
    except KeyError:
        raise ValueError(f"no exact solution registered as {id!r}") from None


def _tail_cut(id: str, tau: float) -> float:
    # slowest decay rate of the solution in s
    if id == "constant_exp":
        rate = 2.0 / (tau + 2.0)
    elif id == "sum_exp":
        # exp((e^-t - 2)s) I1(2 q s) ~ exp(-(2 - e^-t - 2q) s)
        q = math.sqrt(-math.expm1(-tau))
        rate = 2.0 - math.exp(-tau) - 2.0 * q
    else:
        # the series in tau s^3 grows like exp(3 (tau/4)^{1/3} s); the rate vanishes at
        # gelation (tau = 1/2 for this initial condition)
        rate = 1.0 + tau - 3.0 * (tau / 4.0) ** (1.0 / 3.0)
    # tail of s^2 exp(-rate s) below 1e-10
    return min(20000.0, max(40.0, (math.log(1e10) + 20.0) / max(rate, 1e-3)))


def exact_moments(id: str, j: int, tau: float) -> float:
    """Order-``j`` moment of an exact solution; closed form for the constant kernel."""
    if id == "constant_exp":
        if j == 0:
            return 2.0 / (tau + 2.0)
        if j == 1:
            return 1.0
        if j == 2:
            # int s^2 4 e^{-2s/(t+2)}/(t+2)^2 ds = 4 * 2 (t+2)^3 / 8 / (t+2)^2
            return tau + 2.0
    sol = get_exact(id)
    return _quad_moment(sol.evaluator, j, tau, _tail_cut(id, tau))
