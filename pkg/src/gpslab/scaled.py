"""Extended-range nonnegative numbers.

Values of renewal masses and partition functions range far outside double
precision at desk scale, so they are carried as ``mantissa * 2**exponent``.
Scalars use :class:`ScaledNonneg`; grids produced by the DP kernels use
:class:`DiagScaledGrid`, which shares one exponent per anti-diagonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_LN2 = math.log(2.0)


@dataclass(frozen=True, order=False)
class ScaledNonneg:
    """A nonnegative real ``mantissa * 2**exponent``.

    The mantissa is normalized to ``[1, 2)`` (or is exactly 0 with exponent
    0). The exponent is a Python int, so the range is unbounded in practice.

    Examples
    --------
    >>> x = ScaledNonneg.from_log(-5000.0)
    >>> round((x * x).log(), 6)
    -10000.0
    """

    mantissa: float
    exponent: int

    def __post_init__(self) -> None:
        m = self.mantissa
        if m != 0.0 and not (1.0 <= m < 2.0):
            raise ValueError("mantissa must be 0 or lie in [1, 2); use from_parts")
        if m == 0.0 and self.exponent != 0:
            raise ValueError("zero must have exponent 0")

    @classmethod
    def from_parts(cls, mantissa: float, exponent: int) -> "ScaledNonneg":
        """Normalize an arbitrary ``mantissa * 2**exponent``."""
        if mantissa < 0 or not math.isfinite(mantissa):
            raise ValueError("mantissa must be finite and nonnegative")
        if mantissa == 0.0:
            return cls(0.0, 0)
        fr, ex = math.frexp(mantissa)  # fr in [0.5, 1)
        return cls(fr * 2.0, int(exponent) + ex - 1)

    @classmethod
    def from_float(cls, x: float) -> "ScaledNonneg":
        return cls.from_parts(float(x), 0)

    @classmethod
    def from_log(cls, logx: float) -> "ScaledNonneg":
        """From a natural log; ``-inf`` maps to zero."""
        if logx == -math.inf:
            return cls(0.0, 0)
        y = logx / _LN2
        e = math.floor(y)
        return cls.from_parts(2.0 ** (y - e), e)

    def is_zero(self) -> bool:
        return self.mantissa == 0.0

    def log(self) -> float:
        """Natural log (``-inf`` for zero)."""
        if self.is_zero():
            return -math.inf
        return math.log(self.mantissa) + self.exponent * _LN2

    def __float__(self) -> float:
        if self.is_zero():
            return 0.0
        try:
            return math.ldexp(self.mantissa, self.exponent)
        except OverflowError:
            return math.inf

    def __mul__(self, other: "ScaledNonneg") -> "ScaledNonneg":
        if self.is_zero() or other.is_zero():
            return ScaledNonneg(0.0, 0)
        return ScaledNonneg.from_parts(self.mantissa * other.mantissa,
                                       self.exponent + other.exponent)

    def __add__(self, other: "ScaledNonneg") -> "ScaledNonneg":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        hi, lo = (self, other) if self.exponent >= other.exponent else (other, self)
        gap = hi.exponent - lo.exponent
        if gap > 1100:
            return hi
        return ScaledNonneg.from_parts(hi.mantissa + math.ldexp(lo.mantissa, -gap), hi.exponent)

    def _key(self) -> tuple[int, float]:
        return (-(1 << 80), 0.0) if self.is_zero() else (self.exponent, self.mantissa)

    def __lt__(self, other: "ScaledNonneg") -> bool:
        return self._key() < other._key()

    def __le__(self, other: "ScaledNonneg") -> bool:
        return self._key() <= other._key()


@dataclass(frozen=True, eq=False)
class DiagScaledGrid:
    """Grid stored as mantissas plus one binary exponent per anti-diagonal.

    ``value[n, m] = mant[n, m] * 2**dexp[n + m]``.
    """

    mant: np.ndarray
    dexp: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mant.shape

    def log(self) -> np.ndarray:
        """Natural-log grid (``-inf`` where the value is zero)."""
        N, M = self.mant.shape[0] - 1, self.mant.shape[1] - 1
        d = np.add.outer(np.arange(N + 1), np.arange(M + 1))
        with np.errstate(divide="ignore"):
            return np.log(self.mant) + self.dexp[d].astype(np.float64) * _LN2

    def value(self, n: int, m: int) -> ScaledNonneg:
        return ScaledNonneg.from_parts(float(self.mant[n, m]), int(self.dexp[n + m]))

    def to_float(self) -> np.ndarray:
        """Plain doubles; entries outside the double range under/overflow."""
        N, M = self.mant.shape[0] - 1, self.mant.shape[1] - 1
        d = np.add.outer(np.arange(N + 1), np.arange(M + 1))
        e = np.clip(self.dexp[d], -2000, 2000).astype(np.int32)
        with np.errstate(over="ignore"):
            return np.ldexp(self.mant, e)
