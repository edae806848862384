"""Aggregation nonlinearity and breakage operator on time fields.

Both operators are written on the left-hand side of the evolution
equation, ``dc/dt + L[c] + M[c] = 0``, so ``M = loss - gain`` and
``L = death - birth``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .expoly import TimeField, _concat, _pair_convolve, time_tail_integral
from .kernels import BreakageSpec, SeparableKernel

__all__ = ["OperatorSplit", "aggregation_M", "breakage_L", "full_operator"]


@dataclass(frozen=True)
class OperatorSplit:
    kernel: SeparableKernel
    breakage: Optional[BreakageSpec] = None


def aggregation_M(split: OperatorSplit, F: TimeField, G: Optional[TimeField] = None) -> TimeField:
    """Symmetric bilinear aggregation form; ``aggregation_M(split, F)`` is ``M[F]``."""
    if G is None:
        G = F
    pieces = []
    for lam, alpha, beta in split.kernel.terms:
        half = 0.5 * lam
        Fa = F.mul_monomial(alpha)
        Gb = G.mul_monomial(beta)
        # gain: (lam/2) int_0^s (s-x)^alpha F(s-x) x^beta G(x) dx
        gain = _pair_convolve(Fa._t, Gb._t)
        pieces.append(gain.with_coeff(-half * gain.c))
        # loss: (lam/2) [s^a F int x^b G + s^a G int x^b F]
        pieces.append(Fa.times_time_poly(half * Gb.total_integrals())._t)
        Ga = G.mul_monomial(alpha) if G is not F else Fa
        Fb = F.mul_monomial(beta) if G is not F else Gb
        pieces.append(Ga.times_time_poly(half * Fb.total_integrals())._t)
    return TimeField._wrap(_concat(pieces))


def breakage_L(split: OperatorSplit, F: TimeField) -> TimeField:
    """``S(s) F(s) - int_s^inf beta(s, x) S(x) F(x) dx``; zero without breakage."""
    br = split.breakage
    if br is None or len(F) == 0:
        return TimeField.zero()
    death = F.mul_monomial(br.j) * br.sigma_s
    birth = time_tail_integral(F.mul_monomial(br.j - br.i) * br.sigma_s).mul_monomial(br.i - 1) * br.eta
    return death - birth


def full_operator(split: OperatorSplit, F: TimeField) -> TimeField:
    """``L[F] + M[F]``."""
    return breakage_L(split, F) + aggregation_M(split, F)
