"""Truncated power series in the monomial basis on a finite interval.

A :class:`TruncatedSeries` holds ``c_0..c_D`` and represents
``sum(c_k * x**k)``.  Products are truncated above the degree cap ``D``;
everything else is exact in floating point.  Instances are immutable.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import SeriesError

__all__ = ["TruncatedSeries", "DEFAULT_DEGREE", "OutsideDomainWarning"]

DEFAULT_DEGREE = 32


class OutsideDomainWarning(UserWarning):
    """A series was evaluated outside the interval it was built for."""


class TruncatedSeries:
    __slots__ = ("_c", "_domain")

    def __init__(self, coefficients, degree_cap: int | None = None, domain=(0.0, 1.0)):
        c = np.asarray(coefficients, dtype=float).ravel()
        if degree_cap is None:
            degree_cap = max(len(c) - 1, 0)
        if degree_cap < 0:
            raise SeriesError("degree cap must be non-negative")
        if len(c) > degree_cap + 1:
            if np.any(c[degree_cap + 1:] != 0):
                raise SeriesError(f"{len(c) - 1}-degree coefficients exceed cap {degree_cap}")
            c = c[: degree_cap + 1]
        full = np.zeros(degree_cap + 1)
        full[: len(c)] = c
        full.setflags(write=False)
        a, b = float(domain[0]), float(domain[1])
        if not a < b:
            raise SeriesError("domain must satisfy a < b")
        self._c = full
        self._domain = (a, b)

    # -- constructors -----------------------------------------------------

    @classmethod
    def zeros(cls, degree_cap: int = DEFAULT_DEGREE, domain=(0.0, 1.0)) -> "TruncatedSeries":
        return cls(np.zeros(degree_cap + 1), degree_cap, domain)

    @classmethod
    def constant(cls, value: float, degree_cap: int = DEFAULT_DEGREE, domain=(0.0, 1.0)) -> "TruncatedSeries":
        return cls([value], degree_cap, domain)

    @classmethod
    def identity(cls, degree_cap: int = DEFAULT_DEGREE, domain=(0.0, 1.0)) -> "TruncatedSeries":
        """The series for ``x`` itself."""
        return cls([0.0, 1.0], degree_cap, domain)

    def like(self, coefficients) -> "TruncatedSeries":
        return TruncatedSeries(coefficients, self.degree_cap, self._domain)

    # -- properties -------------------------------------------------------

    @property
    def coefficients(self) -> np.ndarray:
        return self._c

    @property
    def degree_cap(self) -> int:
        return len(self._c) - 1

    @property
    def domain(self) -> tuple[float, float]:
        return self._domain

    @property
    def degree(self) -> int:
        """Index of the highest nonzero coefficient (-1 for the zero series)."""
        nz = np.flatnonzero(self._c)
        return int(nz[-1]) if len(nz) else -1

    def __repr__(self):
        return f"TruncatedSeries({np.array2string(self._c[: max(self.degree, 0) + 1], precision=6)}, D={self.degree_cap}, domain={self._domain})"

    # -- ring operations --------------------------------------------------

    def _check(self, other: "TruncatedSeries"):
        if other.degree_cap != self.degree_cap:
            raise SeriesError(f"degree cap mismatch: {self.degree_cap} vs {other.degree_cap}")
        if other._domain != self._domain:
            raise SeriesError(f"domain mismatch: {self._domain} vs {other._domain}")

    def _coerce(self, other) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            self._check(other)
            return other
        if np.ndim(other) == 0:
            return self.like([float(other)])
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self.like(self._c + other._c)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self.like(self._c - other._c)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self.like(other._c - self._c)

    def __neg__(self):
        return self.like(-self._c)

    def scale(self, factor: float) -> "TruncatedSeries":
        return self.like(float(factor) * self._c)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            if np.ndim(other) == 0:
                return self.scale(other)
            return NotImplemented
        self._check(other)
        n = len(self._c)
        return self.like(np.convolve(self._c, other._c)[:n])

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise SeriesError("series powers must be non-negative integers")
        result = self.like([1.0])
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __truediv__(self, other):
        if np.ndim(other) == 0 and not isinstance(other, TruncatedSeries):
            return self.scale(1.0 / float(other))
        raise SeriesError("division is only defined by scalars")

    # -- calculus ---------------------------------------------------------

    def derivative(self) -> "TruncatedSeries":
        k = np.arange(1, len(self._c))
        return self.like(k * self._c[1:])

    differentiate = derivative

    def integrate(self, constant: float = 0.0) -> "TruncatedSeries":
        """Antiderivative with value ``constant`` at x=0."""
        if self.degree >= self.degree_cap:
            raise SeriesError(f"integration would exceed degree cap {self.degree_cap}")
        k = np.arange(1, len(self._c))
        out = np.zeros_like(self._c)
        out[0] = constant
        out[1:] = self._c[:-1] / k
        return self.like(out)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Horner evaluation; scalar or array ``x``."""
        a, b = self._domain
        xa = np.asarray(x, dtype=float)
        span = b - a
        if np.any(xa < a - 1e-12 * span) or np.any(xa > b + 1e-12 * span):
            warnings.warn(f"series evaluated outside its domain [{a}, {b}]", OutsideDomainWarning, stacklevel=2)
        result = np.zeros_like(xa)
        for c in self._c[::-1]:
            result = result * xa + c
        return float(result) if result.ndim == 0 else result

    def allclose(self, other: "TruncatedSeries", rtol=1e-13, atol=0.0) -> bool:
        self._check(other)
        return bool(np.allclose(self._c, other._c, rtol=rtol, atol=atol))

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return (self.degree_cap == other.degree_cap and self._domain == other._domain
                and bool(np.array_equal(self._c, other._c)))

    __hash__ = None
