"""Closed-form algebra on exponential-polynomials.

An :class:`ExpPoly` is a finite sum of terms ``c * s**p * exp(-a*s)`` with
exact rational ``p > -1`` and ``a > 0``.  A :class:`TimeField` is a
polynomial in time whose coefficients are exponential-polynomials,
``sum_k tau**k * f_k(s)``.  Every integral needed by the population
balance operators (finite convolution, integral over the half line,
moments, upper tail integral) has a closed form in this class through
Beta/Gamma identities, so no quadrature happens here.

Internally both types hold a flat term table (numpy columns for the time
degree, coefficient, power numerator/denominator and rate
numerator/denominator).  Pairwise operations are vectorized over the
table, which keeps the recursions fast enough to rebuild a series for
every candidate convergence-control parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Iterable, Sequence

import numpy as np
from scipy import signal, special

__all__ = [
    "AlgebraError",
    "DomainError",
    "UnsupportedCombinationError",
    "TermCountError",
    "ExpPolyTerm",
    "ExpPoly",
    "TimeField",
    "evaluate",
    "convolve",
    "total_integral",
    "moment",
    "tail_integral",
    "time_integrate",
    "time_differentiate",
    "time_convolve",
]

#: relative cancellation threshold used when merging like terms
DROP_TOL = 1e-14


class AlgebraError(Exception):
    """Base class for failures of the closed-form algebra."""


class DomainError(AlgebraError, ValueError):
    """A term left the integrable class, or was evaluated at a singular point."""


class UnsupportedCombinationError(AlgebraError):
    """The requested operation has no closed form inside this algebra."""


class TermCountError(AlgebraError):
    """A field grew past the configured term-count cap."""


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    # floats are accepted only when they are short rationals (0.5, 2.0 ...)
    return Fraction(x).limit_denominator(10_000)


@dataclass(frozen=True)
class ExpPolyTerm:
    """One term ``coeff * s**power * exp(-rate*s)``."""

    coeff: float
    power: Fraction
    rate: Fraction

    def __post_init__(self):
        object.__setattr__(self, "power", _as_fraction(self.power))
        object.__setattr__(self, "rate", _as_fraction(self.rate))
        object.__setattr__(self, "coeff", float(self.coeff))
        if self.power <= -1:
            raise DomainError(f"power {self.power} is not integrable at s=0")
        if self.rate <= 0:
            raise DomainError(f"rate {self.rate} is not integrable at infinity")


# ---------------------------------------------------------------------------
# term tables
# ---------------------------------------------------------------------------

_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0, dtype=np.float64)


@dataclass(frozen=True)
class _Table:
    deg: np.ndarray
    c: np.ndarray
    pn: np.ndarray
    pd: np.ndarray
    rn: np.ndarray
    rd: np.ndarray

    def __len__(self):
        return len(self.c)

    @property
    def power(self) -> np.ndarray:
        return self.pn / self.pd

    @property
    def rate(self) -> np.ndarray:
        return self.rn / self.rd

    def with_coeff(self, c) -> "_Table":
        return _Table(self.deg, np.asarray(c, dtype=np.float64), self.pn, self.pd, self.rn, self.rd)


_EMPTY = _Table(_EMPTY_I, _EMPTY_F, _EMPTY_I, _EMPTY_I + 1, _EMPTY_I, _EMPTY_I + 1)


def _reduce(num, den):
    g = np.gcd(num, den)
    g[g == 0] = 1
    return num // g, den // g


def _canonical(t: _Table) -> _Table:
    """Merge like terms, drop cancelled ones, sort deterministically."""
    if len(t) == 0:
        return _EMPTY
    pn, pd = _reduce(t.pn, t.pd)
    rn, rd = _reduce(t.rn, t.rd)
    # coefficient is the least significant key so that the summation order
    # inside a group depends only on the multiset of contributions
    order = np.lexsort((t.c, rd, rn, pd, pn, t.deg))
    deg, c, pn, pd, rn, rd = (a[order] for a in (t.deg, t.c, pn, pd, rn, rd))
    new_group = np.ones(len(c), dtype=bool)
    new_group[1:] = (
        (deg[1:] != deg[:-1])
        | (pn[1:] != pn[:-1])
        | (pd[1:] != pd[:-1])
        | (rn[1:] != rn[:-1])
        | (rd[1:] != rd[:-1])
    )
    starts = np.flatnonzero(new_group)
    sums = np.add.reduceat(c, starts)
    mags = np.add.reduceat(np.abs(c), starts)
    keep = (sums != 0.0) & (np.abs(sums) > DROP_TOL * mags)
    idx = starts[keep]
    return _Table(deg[idx], sums[keep], pn[idx], pd[idx], rn[idx], rd[idx])


def _concat(tables: Sequence[_Table]) -> _Table:
    tables = [t for t in tables if len(t)]
    if not tables:
        return _EMPTY
    return _canonical(
        _Table(*(np.concatenate([getattr(t, f) for t in tables]) for f in ("deg", "c", "pn", "pd", "rn", "rd")))
    )


def _table_from_terms(terms: Iterable, deg: int = 0) -> _Table:
    rows = []
    for term in terms:
        if not isinstance(term, ExpPolyTerm):
            term = ExpPolyTerm(*term)
        rows.append((deg, term.coeff, term.power.numerator, term.power.denominator,
                     term.rate.numerator, term.rate.denominator))
    if not rows:
        return _EMPTY
    cols = list(zip(*rows))
    return _canonical(
        _Table(
            np.array(cols[0], dtype=np.int64),
            np.array(cols[1], dtype=np.float64),
            *(np.array(col, dtype=np.int64) for col in cols[2:]),
        )
    )


def _check_powers(pn, pd, what="operation"):
    if np.any(pn <= -pd):
        raise DomainError(f"{what} produced a power <= -1")


def _gamma_over_rate(c, q, rate):
    """c * Gamma(q) / rate**q, elementwise."""
    q = np.asarray(q, dtype=np.float64)
    out = np.empty_like(q)
    small = q < 170.0
    out[small] = c[small] * special.gamma(q[small]) / rate[small] ** q[small]
    big = ~small
    if np.any(big):
        out[big] = c[big] * np.exp(special.gammaln(q[big]) - q[big] * np.log(rate[big]))
    return out


def _mul_monomial(t: _Table, q) -> _Table:
    q = _as_fraction(q)
    if q == 0 or len(t) == 0:
        return t
    pn = t.pn * q.denominator + q.numerator * t.pd
    pd = t.pd * q.denominator
    pn, pd = _reduce(pn, pd)
    _check_powers(pn, pd, "monomial multiplication")
    return _Table(t.deg, t.c, pn, pd, t.rn, t.rd)


def _pair_index(n, m):
    i = np.repeat(np.arange(n), m)
    j = np.tile(np.arange(m), n)
    return i, j


def _gamma_scale(x, log_rho):
    """``Gamma(x) / rho**x``; exact Gamma while representable."""
    x = np.asarray(x, dtype=np.float64)
    if log_rho == 0.0 and x.size and x.max() < 170.0:
        return special.gamma(x)
    return np.exp(special.gammaln(x) - x * log_rho)


def _pair_convolve(a: _Table, b: _Table) -> _Table:
    """All pairwise finite convolutions; time degrees add.

    With ``u = (p + 1) * D`` on a common denominator ``D``, the Beta weight
    factorizes as ``Gamma(u1/D) Gamma(u2/D) / Gamma((u1+u2)/D)``, so the
    pair sum is a plain 2-D convolution of Gamma-scaled dense coefficient
    arrays indexed by (time degree, u).
    """
    if len(a) == 0 or len(b) == 0:
        return _EMPTY
    rates = {(int(n), int(d)) for n, d in zip(a.rn, a.rd)} | {(int(n), int(d)) for n, d in zip(b.rn, b.rd)}
    if len(rates) != 1:
        raise UnsupportedCombinationError("convolution of terms with different decay rates")
    # operand order fixed by content so that convolve(f, g) and convolve(g, f) agree bitwise
    if (a.c.tobytes(), a.pn.tobytes(), a.deg.tobytes()) > (b.c.tobytes(), b.pn.tobytes(), b.deg.tobytes()):
        a, b = b, a
    D = int(np.lcm.reduce(np.concatenate([a.pd, b.pd])))
    ua = a.pn * (D // a.pd) + D
    ub = b.pn * (D // b.pd) + D
    x_max = (ua.max() + ub.max()) / D
    log_rho = 0.0 if x_max < 85.0 else float(np.log(x_max / (2.0 * np.e)))
    A = np.zeros((a.deg.max() + 1, ua.max() + 1))
    B = np.zeros((b.deg.max() + 1, ub.max() + 1))
    A[a.deg, ua] = a.c * _gamma_scale(ua / D, log_rho)
    B[b.deg, ub] = b.c * _gamma_scale(ub / D, log_rho)
    out = signal.convolve2d(A, B)
    mag = signal.convolve2d(np.abs(A), np.abs(B))
    d, u = np.nonzero(mag)
    sums = out[d, u]
    keep = (sums != 0.0) & (np.abs(sums) > DROP_TOL * mag[d, u])
    d, u, sums = d[keep], u[keep], sums[keep]
    coeff = sums / _gamma_scale(u / D, log_rho)
    pn, pd = _reduce((u - D).astype(np.int64), np.full(len(u), D, dtype=np.int64))
    n = len(coeff)
    return _Table(d.astype(np.int64), coeff, pn, pd, np.full(n, a.rn[0]), np.full(n, a.rd[0]))


def _pair_product(a: _Table, b: _Table) -> _Table:
    """All pairwise pointwise products; powers, rates and degrees add."""
    if len(a) == 0 or len(b) == 0:
        return _EMPTY
    i, j = _pair_index(len(a), len(b))
    pn, pd = _reduce(a.pn[i] * b.pd[j] + b.pn[j] * a.pd[i], a.pd[i] * b.pd[j])
    _check_powers(pn, pd, "pointwise product")
    rn, rd = _reduce(a.rn[i] * b.rd[j] + b.rn[j] * a.rd[i], a.rd[i] * b.rd[j])
    return _Table(a.deg[i] + b.deg[j], a.c[i] * b.c[j], pn, pd, rn, rd)


def _term_moments(t: _Table, j) -> np.ndarray:
    q = t.power + float(j) + 1.0
    if np.any(q <= 0):
        raise DomainError(f"moment of order {j} diverges at s=0")
    return _gamma_over_rate(t.c, q, t.rate)


def _moments_by_degree(t: _Table, j) -> np.ndarray:
    if len(t) == 0:
        return np.zeros(1)
    vals = _term_moments(t, j)
    return np.bincount(t.deg, weights=vals, minlength=int(t.deg.max()) + 1)


def _tail(t: _Table) -> _Table:
    if len(t) == 0:
        return _EMPTY
    if np.any(t.pd != 1) or np.any(t.pn < 0):
        raise UnsupportedCombinationError("tail integral needs non-negative integer powers")
    deg, c, pn, rn, rd = [], [], [], [], []
    for k in range(len(t)):
        m = int(t.pn[k])
        a = Fraction(int(t.rn[k]), int(t.rd[k]))
        af = float(a)
        for i in range(m + 1):
            deg.append(t.deg[k])
            c.append(t.c[k] * (factorial(m) / factorial(i)) / af ** (m - i + 1))
            pn.append(i)
            rn.append(a.numerator)
            rd.append(a.denominator)
    n = len(c)
    return _canonical(
        _Table(
            np.array(deg, dtype=np.int64),
            np.array(c),
            np.array(pn, dtype=np.int64),
            np.ones(n, dtype=np.int64),
            np.array(rn, dtype=np.int64),
            np.array(rd, dtype=np.int64),
        )
    )


def _eval_table(t: _Table, s, tau=None):
    s = np.asarray(s, dtype=np.float64)
    if tau is None:
        shape = s.shape
        ss = s.reshape(-1)
        tt = np.ones_like(ss)
    else:
        s_b, tau_b = np.broadcast_arrays(s, np.asarray(tau, dtype=np.float64))
        shape = s_b.shape
        ss = s_b.reshape(-1)
        tt = tau_b.reshape(-1)
    if np.any(ss < 0):
        raise DomainError("evaluation at negative size")
    if len(t) == 0:
        return np.zeros(shape)[()]
    # basis functions s^p e^{-as} for each distinct (p, a), then degree rows
    keys = np.stack([t.pn, t.pd, t.rn, t.rd], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    p = uniq[:, 0] / uniq[:, 1]
    a = uniq[:, 2] / uniq[:, 3]
    if np.any(ss == 0) and np.any(p < 0):
        raise DomainError("negative power evaluated at s=0")
    ndeg = int(t.deg.max()) + 1
    C = np.zeros((ndeg, len(uniq)))
    np.add.at(C, (t.deg, inv), t.c)
    out = np.empty(ss.shape)
    step = max(1, 4_000_000 // (len(uniq) + ndeg))
    for lo in range(0, len(ss), step):
        sc = ss[lo:lo + step]
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.log(sc)
            basis = np.exp(p[:, None] * logs[None, :] - a[:, None] * sc[None, :])
        zero = sc == 0
        if np.any(zero):
            basis[:, zero] = np.where(p == 0, 1.0, 0.0)[:, None]
        rows = C @ basis
        # Horner in tau over the degree rows
        acc = rows[-1].copy()
        tc = tt[lo:lo + step]
        for k in range(ndeg - 2, -1, -1):
            acc = acc * tc + rows[k]
        out[lo:lo + step] = acc
    return out.reshape(shape)[()]


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------


class ExpPoly:
    """Finite sum of ``c * s**p * exp(-a*s)`` terms in canonical form.

    Terms may be given as :class:`ExpPolyTerm` or ``(coeff, power, rate)``
    tuples; powers and rates are converted to exact fractions.

    >>> f = ExpPoly([(4, 1, 2)])          # 4 s exp(-2s)
    >>> round(total_integral(f), 12)
    1.0
    """

    __slots__ = ("_t",)

    def __init__(self, terms: Iterable = ()):
        self._t = _table_from_terms(terms)

    @classmethod
    def _wrap(cls, t: _Table) -> "ExpPoly":
        obj = cls.__new__(cls)
        obj._t = t
        return obj

    @classmethod
    def zero(cls) -> "ExpPoly":
        return cls._wrap(_EMPTY)

    @property
    def terms(self) -> tuple[ExpPolyTerm, ...]:
        t = self._t
        return tuple(
            ExpPolyTerm(float(t.c[k]), Fraction(int(t.pn[k]), int(t.pd[k])), Fraction(int(t.rn[k]), int(t.rd[k])))
            for k in range(len(t))
        )

    def __len__(self):
        return len(self._t)

    def __repr__(self):
        parts = [f"{x.coeff:+.6g}*s^{x.power}*e^(-{x.rate}s)" for x in self.terms]
        return "ExpPoly(" + (" ".join(parts) if parts else "0") + ")"

    def as_dict(self) -> dict[tuple[Fraction, Fraction], float]:
        """``{(power, rate): coeff}`` view, handy in tests."""
        return {(x.power, x.rate): x.coeff for x in self.terms}

    def __call__(self, s):
        return evaluate(self, s)

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        return ExpPoly._wrap(_concat([self._t, other._t]))

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, ExpPoly):
            return ExpPoly._wrap(_canonical(_pair_product(self._t, other._t)))
        return ExpPoly._wrap(_canonical(self._t.with_coeff(self._t.c * float(other))))

    __rmul__ = __mul__

    def __truediv__(self, x: float):
        return self * (1.0 / float(x))

    def mul_monomial(self, q) -> "ExpPoly":
        """Multiply by ``s**q``."""
        return ExpPoly._wrap(_canonical(_mul_monomial(self._t, q)))

    def max_abs_coeff(self) -> float:
        return float(np.max(np.abs(self._t.c))) if len(self) else 0.0

    def equals(self, other: "ExpPoly", rtol: float = 0.0, atol: float = 0.0) -> bool:
        """Term-level comparison; ``rtol=atol=0`` demands bitwise equal coefficients."""
        return _tables_equal(self._t, other._t, rtol, atol)


class TimeField:
    """Polynomial in time with :class:`ExpPoly` coefficients.

    Built either from ``{degree: ExpPoly}`` / ``[(degree, ExpPoly), ...]``
    or by lifting a single ExpPoly with :meth:`lift`.
    """

    __slots__ = ("_t",)

    def __init__(self, coeffs=()):
        if isinstance(coeffs, dict):
            coeffs = coeffs.items()
        tables = []
        for k, f in coeffs:
            if k < 0:
                raise ValueError("time degree must be non-negative")
            t = f._t
            tables.append(_Table(np.full(len(t), int(k), dtype=np.int64), t.c, t.pn, t.pd, t.rn, t.rd))
        self._t = _concat(tables)

    @classmethod
    def _wrap(cls, t: _Table) -> "TimeField":
        obj = cls.__new__(cls)
        obj._t = t
        return obj

    @classmethod
    def lift(cls, f: ExpPoly, degree: int = 0) -> "TimeField":
        return cls({degree: f})

    @classmethod
    def zero(cls) -> "TimeField":
        return cls._wrap(_EMPTY)

    @property
    def degrees(self) -> list[int]:
        return sorted(set(int(k) for k in self._t.deg))

    @property
    def coeffs(self) -> list[tuple[int, ExpPoly]]:
        return [(k, self.coefficient(k)) for k in self.degrees]

    def coefficient(self, k: int) -> ExpPoly:
        t = self._t
        m = t.deg == k
        return ExpPoly._wrap(_Table(np.zeros(int(m.sum()), dtype=np.int64), t.c[m], t.pn[m], t.pd[m], t.rn[m], t.rd[m]))

    def __len__(self):
        return len(self._t)

    def max_terms_per_coefficient(self) -> int:
        if len(self._t) == 0:
            return 0
        return int(np.bincount(self._t.deg).max())

    def __repr__(self):
        return "TimeField(" + ", ".join(f"tau^{k}: {f!r}" for k, f in self.coeffs) + ")"

    def __call__(self, s, tau):
        return _eval_table(self._t, s, tau)

    def evaluate(self, s, tau):
        """Value at ``(s, tau)``; broadcasts over arrays."""
        return _eval_table(self._t, s, tau)

    def __add__(self, other: "TimeField") -> "TimeField":
        return TimeField._wrap(_concat([self._t, other._t]))

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other: "TimeField") -> "TimeField":
        return self + (-other)

    def __mul__(self, x: float) -> "TimeField":
        return TimeField._wrap(_canonical(self._t.with_coeff(self._t.c * float(x))))

    __rmul__ = __mul__

    def mul_monomial(self, q) -> "TimeField":
        return TimeField._wrap(_canonical(_mul_monomial(self._t, q)))

    def times_time_poly(self, poly: Sequence[float]) -> "TimeField":
        """Multiply by ``sum_n poly[n] * tau**n`` (scalar coefficients)."""
        poly = np.asarray(poly, dtype=np.float64)
        nz = np.flatnonzero(poly)
        t = self._t
        if len(t) == 0 or len(nz) == 0:
            return TimeField.zero()
        i, j = _pair_index(len(t), len(nz))
        return TimeField._wrap(
            _canonical(_Table(t.deg[i] + nz[j], t.c[i] * poly[nz[j]], t.pn[i], t.pd[i], t.rn[i], t.rd[i]))
        )

    def moments(self, j: int) -> np.ndarray:
        """Order-``j`` size moment of each time coefficient, indexed by degree."""
        return _moments_by_degree(self._t, j)

    def moment(self, j: int, tau) -> float:
        """Order-``j`` moment of the field at time ``tau``."""
        coeffs = self.moments(j)
        return float(np.polynomial.polynomial.polyval(tau, coeffs))

    def total_integrals(self) -> np.ndarray:
        return self.moments(0)

    def equals(self, other: "TimeField", rtol: float = 0.0, atol: float = 0.0) -> bool:
        return _tables_equal(self._t, other._t, rtol, atol)


def _tables_equal(a: _Table, b: _Table, rtol, atol) -> bool:
    if len(a) != len(b):
        return False
    for f in ("deg", "pn", "pd", "rn", "rd"):
        if not np.array_equal(getattr(a, f), getattr(b, f)):
            return False
    if rtol == 0 and atol == 0:
        return bool(np.array_equal(a.c, b.c))
    return bool(np.allclose(a.c, b.c, rtol=rtol, atol=atol))


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def evaluate(f: ExpPoly, s):
    """Value of ``f`` at ``s >= 0`` (scalar or array)."""
    return _eval_table(f._t, s)


def convolve(f: ExpPoly, g: ExpPoly) -> ExpPoly:
    """``integral_0^s f(s - x) g(x) dx`` in closed form.

    Each term pair must share its decay rate; the result of
    ``s^p e^{-as} * s^q e^{-as}`` is ``B(p+1, q+1) s^{p+q+1} e^{-as}``.
    """
    return ExpPoly._wrap(_canonical(_pair_convolve(f._t, g._t)))


def total_integral(f: ExpPoly) -> float:
    """``integral_0^inf f(s) ds``."""
    return moment(f, 0)


def moment(f: ExpPoly, j: int) -> float:
    """``integral_0^inf s**j f(s) ds`` via ``Gamma(p+j+1) / a**(p+j+1)``."""
    if len(f) == 0:
        return 0.0
    return float(np.sum(_term_moments(f._t, j)))


def tail_integral(f: ExpPoly) -> ExpPoly:
    """``integral_s^inf f(x) dx`` as a function of the lower limit ``s``.

    Only non-negative integer powers are supported (finite incomplete-gamma
    expansion).
    """
    return ExpPoly._wrap(_tail(f._t))


def time_integrate(F: TimeField) -> TimeField:
    """``integral_0^tau F(s, r) dr``."""
    t = F._t
    return TimeField._wrap(_Table(t.deg + 1, t.c / (t.deg + 1), t.pn, t.pd, t.rn, t.rd))


def time_differentiate(F: TimeField) -> TimeField:
    """Partial derivative in time; the constant-in-time part drops out."""
    t = F._t
    m = t.deg > 0
    return TimeField._wrap(_Table(t.deg[m] - 1, t.c[m] * t.deg[m], t.pn[m], t.pd[m], t.rn[m], t.rd[m]))


def time_convolve(F: TimeField, G: TimeField) -> TimeField:
    """Size convolution of two time fields (time degrees multiply out)."""
    return TimeField._wrap(_canonical(_pair_convolve(F._t, G._t)))


def time_tail_integral(F: TimeField) -> TimeField:
    """Tail integral applied to every time coefficient."""
    return TimeField._wrap(_tail(F._t))


def time_product(F: TimeField, G: TimeField) -> TimeField:
    """Pointwise product of two time fields."""
    return TimeField._wrap(_canonical(_pair_product(F._t, G._t)))
