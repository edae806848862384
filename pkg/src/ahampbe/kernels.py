"""Separable aggregation kernels and power-law breakage specifications."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .expoly import _as_fraction

__all__ = [
    "SeparableKernel",
    "BreakageSpec",
    "builtin_kernel",
    "kernel_evaluate",
    "BROWNIAN_CORRECTION",
]

BROWNIAN_CORRECTION = 0.7071


@dataclass(frozen=True)
class SeparableKernel:
    """``w(s, x) = sum(lam * s**alpha * x**beta)`` over ``terms``.

    Terms are ``(lam, alpha, beta)`` with rational exponents.  The kernel
    must be symmetric term-by-term and homogeneous.
    """

    terms: tuple[tuple[float, Fraction, Fraction], ...]
    name: str = "custom"

    def __post_init__(self):
        terms = tuple((float(lam), _as_fraction(a), _as_fraction(b)) for lam, a, b in self.terms)
        object.__setattr__(self, "terms", terms)
        weights: dict[tuple[Fraction, Fraction], float] = {}
        for lam, a, b in terms:
            weights[(a, b)] = weights.get((a, b), 0.0) + lam
        for (a, b), lam in weights.items():
            if a != b and weights.get((b, a)) != lam:
                raise ValueError(f"kernel term s^{a} x^{b} has no symmetric partner")
        if len({a + b for _, a, b in terms}) > 1:
            raise ValueError("kernel terms are not homogeneous of a single degree")

    @property
    def homogeneity(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        _, a, b = self.terms[0]
        return a + b

    def __call__(self, s, x):
        return kernel_evaluate(self, s, x)

    def to_dict(self) -> dict:
        return {"name": self.name, "terms": [[lam, str(a), str(b)] for lam, a, b in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "SeparableKernel":
        if "terms" not in d:
            return builtin_kernel(d["name"])
        return cls(tuple((lam, Fraction(a), Fraction(b)) for lam, a, b in d["terms"]), d.get("name", "custom"))


@dataclass(frozen=True)
class BreakageSpec:
    """Power-law breakage: ``beta(s, x) = eta s^(i-1) / x^i``, ``S(s) = sigma_s s^j``."""

    eta: float
    i: int
    j: int
    sigma_s: float

    def __post_init__(self):
        if self.eta <= 0 or self.sigma_s <= 0:
            raise ValueError("eta and sigma_s must be positive")
        if self.i < 1 or self.j < 1:
            raise ValueError("breakage exponents i, j must be >= 1")
        # mass normalization: int_0^x s beta(s, x) ds = x  <=>  eta = i + 1
        if abs(self.eta - (self.i + 1)) > 1e-12:
            raise ValueError(f"breakage kernel is not mass-normalized: eta={self.eta}, need {self.i + 1}")

    def beta(self, s, x):
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.where(s <= x, self.eta * s ** (self.i - 1) / x**self.i, 0.0)

    def selection(self, s):
        return self.sigma_s * np.asarray(s, dtype=float) ** self.j

    def to_dict(self) -> dict:
        return {"eta": self.eta, "i": self.i, "j": self.j, "sigma_s": self.sigma_s}

    @classmethod
    def from_dict(cls, d: dict) -> "BreakageSpec":
        return cls(float(d["eta"]), int(d["i"]), int(d["j"]), float(d["sigma_s"]))


def builtin_kernel(name: str, b: float = BROWNIAN_CORRECTION) -> SeparableKernel:
    """Constant, sum, product or (free-molecular, separable) Brownian kernel.

    The Brownian form is ``b (s^1/3 + x^1/3)^2 (s^-1/2 + x^-1/2)``, expanded
    into six separable monomials of homogeneity 1/6.
    """
    F = Fraction
    if name == "constant":
        terms = [(1.0, 0, 0)]
    elif name == "sum":
        terms = [(1.0, 1, 0), (1.0, 0, 1)]
    elif name == "product":
        terms = [(1.0, 1, 1)]
    elif name == "brownian":
        terms = [
            (b, F(2, 3), F(-1, 2)),
            (b, F(1, 6), F(0)),
            (2 * b, F(1, 3), F(-1, 6)),
            (2 * b, F(-1, 6), F(1, 3)),
            (b, F(0), F(1, 6)),
            (b, F(-1, 2), F(2, 3)),
        ]
    else:
        raise ValueError(f"unknown kernel {name!r}")
    return SeparableKernel(tuple(terms), name)


def kernel_evaluate(w: SeparableKernel, s, x):
    """Pointwise kernel value; broadcasts over arrays."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros(np.broadcast(s, x).shape)
    for lam, a, b in w.terms:
        out = out + lam * s ** float(a) * x ** float(b)
    return out[()]
