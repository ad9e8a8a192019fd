"""Reproducible i.i.d. disorder fields.

``omega[n, m]`` is a pure function of ``(master_seed, replica, n, m)``: it is
word ``m % 4`` of the Philox-4x64 block with counter ``(m // 4, n, 0, 0)``
under key ``(mixed seed, replica)``. Any window of the infinite field can be
produced without materializing the rest, and shifted views are exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    """SplitMix64 finalizer; spreads user seeds over the key space."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class DisorderSpec:
    """Law of a single site variable and the seed of the whole field.

    Both laws are centred with unit variance. ``log_Q(beta) = log E[e^{beta omega}]``.
    """

    distribution: Literal["gaussian_unit", "rademacher_unit"] = "gaussian_unit"
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.distribution not in ("gaussian_unit", "rademacher_unit"):
            raise ValueError(f"unknown disorder law {self.distribution!r}")
        if not 0 <= int(self.master_seed) <= _MASK64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    def log_Q(self, beta):
        """``log E[exp(beta * omega)]`` (vectorized)."""
        beta = np.asarray(beta, dtype=np.float64)
        if self.distribution == "gaussian_unit":
            out = 0.5 * beta**2
        else:
            # log cosh, stable for large |beta|
            a = np.abs(beta)
            out = a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)
        return out if out.ndim else float(out)

    def support(self) -> np.ndarray | None:
        """Atoms of a discrete law (``None`` for continuous laws)."""
        return np.array([-1.0, 1.0]) if self.distribution == "rademacher_unit" else None

    def field(self, replica: int = 0) -> "DisorderField":
        return DisorderField(self, int(replica))


@dataclass(frozen=True)
class DisorderField:
    """View of one disorder realization, optionally shifted.

    ``field.shift(a, b)`` returns the view ``(Θ_{a,b} omega)[n, m] = omega[a + n, b + m]``.
    """

    spec: DisorderSpec
    replica: int = 0
    origin: tuple[int, int] = (0, 0)

    def shift(self, a: int, b: int) -> "DisorderField":
        return DisorderField(self.spec, self.replica, (self.origin[0] + a, self.origin[1] + b))

    def _key(self) -> np.ndarray:
        return np.array([_mix64(int(self.spec.master_seed)), self.replica & _MASK64],
                        dtype=np.uint64)

    def _row_raw(self, n_abs: int, m_lo: int, m_hi: int) -> np.ndarray:
        b0 = m_lo // 4
        nblocks = m_hi // 4 - b0 + 1
        bg = np.random.Philox(key=self._key(), counter=[b0, n_abs, 0, 0])
        raw = bg.random_raw(4 * nblocks)
        off = m_lo - 4 * b0
        return raw[off : off + (m_hi - m_lo + 1)]

    def raw(self, n_lo: int, n_hi: int, m_lo: int, m_hi: int) -> np.ndarray:
        """Raw 64-bit words for the window ``[n_lo, n_hi] x [m_lo, m_hi]``."""
        a, b = self.origin
        if n_lo + a < 0 or m_lo + b < 0:
            raise ValueError("disorder coordinates must be nonnegative")
        out = np.empty((n_hi - n_lo + 1, m_hi - m_lo + 1), dtype=np.uint64)
        for r, n in enumerate(range(n_lo + a, n_hi + a + 1)):
            out[r] = self._row_raw(n, m_lo + b, m_hi + b)
        return out

    def window(self, n_lo: int, n_hi: int, m_lo: int, m_hi: int) -> np.ndarray:
        """``omega[n, m]`` for ``n_lo <= n <= n_hi``, ``m_lo <= m <= m_hi``."""
        x = self.raw(n_lo, n_hi, m_lo, m_hi)
        if self.spec.distribution == "rademacher_unit":
            return np.where((x >> np.uint64(63)) == 1, 1.0, -1.0)
        u = ((x >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return special.ndtri(u)

    def grid(self, N: int, M: int) -> np.ndarray:
        """``omega[n, m]`` on ``[0, N] x [0, M]`` (axis entries are unused)."""
        return self.window(0, N, 0, M)

    def __getitem__(self, nm: tuple[int, int]) -> float:
        n, m = nm
        return float(self.window(n, n, m, m)[0, 0])
