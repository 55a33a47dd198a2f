"""Truncated multivariate Taylor series ("jets") with Wirtinger partials.

A :class:`Jet` stores the Taylor coefficients of a function of ``nvars``
formal variables around a base point, truncated at total degree ``order``.
The default variable set is ``(z, zbar, w, wbar)``; the barred variables are
treated as independent, so holomorphic and antiholomorphic derivatives are
plain partial derivatives and complex conjugation is the formal swap
implemented by :meth:`Jet.conjugate_swap`.

Coefficient arrays carry an optional trailing batch shape so that a single
jet can hold the expansions at many base points at once.  All arithmetic is
vectorised over that batch.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from numbers import Number
from typing import Sequence

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - pure numpy fallback
    numba = None

__all__ = [
    "Jet",
    "JetError",
    "SingularJetError",
    "JetDomainError",
    "TruncationError",
    "monomials",
    "nest_through_chart",
    "Z",
    "ZBAR",
    "W",
    "WBAR",
]

Z, ZBAR, W, WBAR = 0, 1, 2, 3


class JetError(ArithmeticError):
    """Base class for jet arithmetic failures."""


class SingularJetError(JetError):
    """Division by a jet whose constant term vanishes."""


class JetDomainError(JetError):
    """log/sqrt of a jet whose constant term is not positive real."""


class TruncationError(JetError):
    """A derivative was requested beyond the truncation order."""


@dataclass(frozen=True)
class _Tables:
    nvars: int
    order: int
    exps: np.ndarray  # (ncoef, nvars)
    index: dict
    counts: tuple  # counts[k] = number of monomials of degree <= k
    mul_i: np.ndarray
    mul_j: np.ndarray
    mul_starts: np.ndarray
    mul_t: np.ndarray  # target index per pair
    factorials: np.ndarray  # prod of exps! per monomial
    deriv: tuple  # per variable: (src indices into order K, multipliers)
    swap: np.ndarray  # monomial permutation for z<->zbar, w<->wbar (4 variables)


def monomials(nvars: int, order: int) -> list[tuple[int, ...]]:
    """Exponent tuples of total degree <= order, graded then reverse-lex."""
    out = []
    for deg in range(order + 1):
        block = [
            e
            for e in itertools.product(range(deg, -1, -1), repeat=nvars)
            if sum(e) == deg
        ]
        out.extend(block)
    return out


@functools.lru_cache(maxsize=None)
def _tables(nvars: int, order: int) -> _Tables:
    mons = monomials(nvars, order)
    exps = np.array(mons, dtype=np.int64).reshape(len(mons), nvars)
    index = {m: k for k, m in enumerate(mons)}
    counts = tuple(
        sum(1 for m in mons if sum(m) <= k) for k in range(order + 1)
    )
    ii, jj, tt = [], [], []
    for a, ma in enumerate(mons):
        da = sum(ma)
        for b, mb in enumerate(mons):
            if da + sum(mb) > order:
                continue
            ii.append(a)
            jj.append(b)
            tt.append(index[tuple(x + y for x, y in zip(ma, mb))])
    perm = np.argsort(np.array(tt), kind="stable")
    tt = np.array(tt)[perm]
    starts = np.searchsorted(tt, np.arange(len(mons)))
    fact = np.array(
        [math.prod(math.factorial(x) for x in m) for m in mons], dtype=float
    )
    deriv = []
    n_low = counts[order - 1] if order > 0 else 0
    for v in range(nvars):
        src = np.empty(n_low, dtype=np.int64)
        mult = np.empty(n_low, dtype=float)
        for k in range(n_low):
            m = list(mons[k])
            m[v] += 1
            src[k] = index[tuple(m)]
            mult[k] = m[v]
        deriv.append((src, mult))
    if nvars == 4:
        swap = np.array([index[(m[1], m[0], m[3], m[2])] for m in mons], dtype=np.int64)
    else:
        swap = np.arange(len(mons))
    return _Tables(
        swap=swap,
        nvars=nvars,
        order=order,
        exps=exps,
        index=index,
        counts=counts,
        mul_i=np.array(ii, dtype=np.int64)[perm],
        mul_j=np.array(jj, dtype=np.int64)[perm],
        mul_starts=starts,
        mul_t=tt.astype(np.int64),
        factorials=fact,
        deriv=tuple(deriv),
    )


if numba is not None:

    @numba.njit(cache=True)
    def _convolve(a, b, I, J, T, n):  # pragma: no cover - compiled
        N = a.shape[1]
        out = np.zeros((n, N), dtype=np.complex128)
        for p in range(I.shape[0]):
            i = I[p]
            j = J[p]
            t = T[p]
            for k in range(N):
                out[t, k] += a[i, k] * b[j, k]
        return out


def _multiply(a: np.ndarray, b: np.ndarray, t: "_Tables") -> np.ndarray:
    if numba is None:
        return np.add.reduceat(a[t.mul_i] * b[t.mul_j], t.mul_starts, axis=0)
    shape = a.shape
    a2 = np.ascontiguousarray(a.reshape(shape[0], -1), dtype=np.complex128)
    b2 = np.ascontiguousarray(b.reshape(shape[0], -1), dtype=np.complex128)
    return _convolve(a2, b2, t.mul_i, t.mul_j, t.mul_t, shape[0]).reshape(shape)


def _is_scalar(x) -> bool:
    return isinstance(x, Number) or (isinstance(x, np.ndarray) and not isinstance(x, Jet))


class Jet:
    """Truncated Taylor expansion of a scalar function around a base point.

    Parameters
    ----------
    coeffs : ndarray
        Complex coefficients with shape ``(ncoef, *batch)`` in the monomial
        order of :func:`monomials`.
    order : int
        Truncation degree ``K``.
    base : ndarray
        Base point values with shape ``(nvars, *batch)``.
    """

    __slots__ = ("coeffs", "order", "base")
    __array_ufunc__ = None  # keep ndarray * Jet on the Jet side

    def __init__(self, coeffs: np.ndarray, order: int, base: np.ndarray):
        self.coeffs = coeffs
        self.order = order
        self.base = base

    # -- construction -------------------------------------------------
    @staticmethod
    def _base(base) -> np.ndarray:
        return np.asarray(base, dtype=complex)

    @classmethod
    def constant(cls, value, base, order: int) -> "Jet":
        base = cls._base(base)
        t = _tables(base.shape[0], order)
        c = np.zeros((len(t.exps),) + base.shape[1:], dtype=complex)
        c[0] = value
        return cls(c, order, base)

    @classmethod
    def variable(cls, v: int, base, order: int) -> "Jet":
        base = cls._base(base)
        t = _tables(base.shape[0], order)
        c = np.zeros((len(t.exps),) + base.shape[1:], dtype=complex)
        c[0] = base[v]
        if order >= 1:
            e = [0] * base.shape[0]
            e[v] = 1
            c[t.index[tuple(e)]] = 1.0
        return cls(c, order, base)

    @classmethod
    def variables(cls, base, order: int) -> list["Jet"]:
        base = cls._base(base)
        return [cls.variable(v, base, order) for v in range(base.shape[0])]

    # -- basic properties --------------------------------------------
    @property
    def nvars(self) -> int:
        return self.base.shape[0]

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    def _t(self) -> _Tables:
        return _tables(self.nvars, self.order)

    def coeff(self, d: Sequence[int]):
        d = tuple(int(x) for x in d)
        if sum(d) > self.order:
            raise TruncationError(
                f"multidegree {d} exceeds jet order {self.order}"
            )
        return self.coeffs[self._t().index[d]]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise TruncationError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        n = self._t().counts[order]
        return Jet(self.coeffs[:n], order, self.base)

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, nvars={self.nvars}, batch={self.batch_shape})"

    # -- arithmetic ---------------------------------------------------
    def _align(self, other: "Jet") -> tuple["Jet", "Jet"]:
        if other.base is not self.base and (
            other.base.shape != self.base.shape
            or not np.array_equal(other.base, self.base)
        ):
            raise JetError("jets expanded at different base points")
        k = min(self.order, other.order)
        return self.truncate(k), other.truncate(k)

    def _scalar_coeff(self, s):
        s = np.asarray(s, dtype=complex)
        return s[None] if s.ndim else s

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a.coeffs + b.coeffs, a.order, a.base)
        if _is_scalar(other):
            c = self.coeffs.copy()
            c[0] = c[0] + other
            return Jet(c, self.order, self.base)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.order, self.base)

    def __sub__(self, other):
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a.coeffs - b.coeffs, a.order, a.base)
        if _is_scalar(other):
            return self + (-np.asarray(other))
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self._align(other)
            t = a._t()
            ca, cb = np.broadcast_arrays(a.coeffs, b.coeffs)
            return Jet(_multiply(ca, cb, t), a.order, a.base)
        if _is_scalar(other):
            return Jet(self.coeffs * self._scalar_coeff(other), self.order, self.base)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if _is_scalar(other):
            return Jet(self.coeffs / self._scalar_coeff(other), self.order, self.base)
        return NotImplemented

    def __rtruediv__(self, other):
        if _is_scalar(other):
            return self.reciprocal() * other
        return NotImplemented

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        return self.powi(int(n))

    def powi(self, n: int) -> "Jet":
        result = Jet.constant(1.0, self.base, self.order)
        if n:
            result = Jet(np.broadcast_to(result.coeffs, self.coeffs.shape).copy(), self.order, self.base)
        sq = self
        while n:
            if n & 1:
                result = result * sq
            n >>= 1
            if n:
                sq = sq * sq
        return result

    # -- composition with univariate series ---------------------------
    def _compose(self, series: list) -> "Jet":
        """Return sum_k series[k] * (self - self.value)**k."""
        delta = self.coeffs.copy()
        delta[0] = 0.0
        delta = Jet(delta, self.order, self.base)
        out = Jet.constant(0.0, self.base, self.order)
        out = Jet(np.broadcast_to(out.coeffs, self.coeffs.shape).copy(), self.order, self.base)
        out.coeffs[0] = series[-1]
        for s in reversed(series[:-1]):
            out = out * delta
            out.coeffs[0] = out.coeffs[0] + s
        return out

    def reciprocal(self) -> "Jet":
        x0 = self.value
        if np.any(x0 == 0):
            raise SingularJetError("division by a jet with zero constant term")
        return self._compose([(-1.0) ** k / x0 ** (k + 1) for k in range(self.order + 1)])

    def _check_positive(self, name: str):
        x0 = self.value
        bad = (x0.real <= 0) | (np.abs(x0.imag) > 1e-10 * np.maximum(1.0, np.abs(x0)))
        if np.any(bad):
            v = np.asarray(x0)[np.asarray(bad)] if np.ndim(x0) else x0
            first = complex(np.ravel(v)[0])
            raise JetDomainError(
                f"{name} needs a positive real constant term, got {first:.6g}"
            )

    def log(self) -> "Jet":
        self._check_positive("log")
        x0 = self.value.real.astype(complex)
        series = [np.log(x0)] + [
            (-1.0) ** (k + 1) / (k * x0**k) for k in range(1, self.order + 1)
        ]
        return self._compose(series)

    def exp(self) -> "Jet":
        e0 = np.exp(self.value)
        return self._compose([e0 / math.factorial(k) for k in range(self.order + 1)])

    def sqrt(self) -> "Jet":
        self._check_positive("sqrt")
        x0 = self.value.real.astype(complex)
        series = []
        coef = 1.0
        for k in range(self.order + 1):
            series.append(coef * x0 ** (0.5 - k))
            coef *= (0.5 - k) / (k + 1)
        return self._compose(series)

    # -- calculus -----------------------------------------------------
    def derivative(self, v: int) -> "Jet":
        """Wirtinger partial with respect to variable ``v``; drops the order by one."""
        if self.order == 0:
            raise TruncationError("cannot differentiate an order-0 jet")
        src, mult = self._t().deriv[v]
        shape = (len(mult),) + (1,) * len(self.batch_shape)
        return Jet(self.coeffs[src] * mult.reshape(shape), self.order - 1, self.base)

    def wirtinger_partial(self, d: Sequence[int]):
        """Exact mixed partial ``d`` at the base point."""
        d = tuple(int(x) for x in d)
        if sum(d) > self.order:
            raise TruncationError(
                f"partial of degree {sum(d)} requested from an order-{self.order} jet"
            )
        return self.coeff(d) * math.prod(math.factorial(x) for x in d)

    def conjugate_swap(self) -> "Jet":
        """Formal complex conjugate: swap z<->zbar, w<->wbar and conjugate coefficients.

        Jets in other variable counts are treated as functions of real
        parameters and are conjugated coefficientwise.
        """
        t = self._t()
        if self.nvars == 4:
            coeffs = np.conj(self.coeffs[t.swap])
            base = np.conj(self.base[[1, 0, 3, 2]])
        else:
            coeffs = np.conj(self.coeffs)
            base = np.conj(self.base)
        if base.shape == self.base.shape and np.array_equal(base, self.base):
            base = self.base
        return Jet(coeffs, self.order, base)

    def evaluate(self, delta: Sequence) -> np.ndarray:
        """Sum the truncated series at displacement ``delta`` from the base."""
        t = self._t()
        delta = [np.asarray(d, dtype=complex) for d in delta]
        total = np.zeros(self.batch_shape, dtype=complex)
        for k, m in enumerate(t.exps):
            term = self.coeffs[k]
            for v, e in enumerate(m):
                if e:
                    term = term * delta[v] ** e
            total = total + term
        return total


def _pow_table(x: Jet, n: int) -> list[Jet]:
    out = [Jet(np.broadcast_to(Jet.constant(1.0, x.base, x.order).coeffs, x.coeffs.shape).copy(), x.order, x.base)]
    for _ in range(n):
        out.append(out[-1] * x)
    return out


def nest_through_chart(f: Jet, chart: Sequence[Jet]) -> Jet:
    """Substitute parameter jets into ``f``.

    ``chart[v]`` is the jet (in the chart parameters) of the v-th formal
    variable of ``f``; its constant term must equal ``f.base[v]``.  The
    result is the jet of the composite in the chart parameters, truncated
    at the smaller of the two orders.
    """
    if len(chart) != f.nvars:
        raise JetError(f"chart supplies {len(chart)} variables, jet has {f.nvars}")
    k = min(f.order, min(c.order for c in chart))
    f = f.truncate(k)
    chart = [c.truncate(k) for c in chart]
    deltas = []
    for v, c in enumerate(chart):
        if not np.allclose(c.value, f.base[v], rtol=0, atol=1e-12):
            raise JetError(f"chart variable {v} does not start at the jet base point")
        d = c.coeffs.copy()
        d[0] = 0.0
        deltas.append(Jet(d, k, c.base))
    powers = [_pow_table(d, k) for d in deltas]
    t = f._t()
    ref = chart[0]
    out = Jet(np.zeros(ref.coeffs.shape, dtype=complex), k, ref.base)
    for idx, m in enumerate(t.exps):
        term = powers[0][m[0]]
        for v in range(1, f.nvars):
            if m[v]:
                term = term * powers[v][m[v]]
        out = out + term * f.coeffs[idx]
    return out
