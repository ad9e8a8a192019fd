"""Heavy-tailed inter-arrival kernel ``K(t) = L(t) / (norm * t**(2 + alpha))``.

A jump of the bivariate renewal is ``(i, j)`` with ``i, j >= 1`` and
``P(jump = (i, j)) = K(i + j)``. The total ``t = i + j`` therefore has law
``(t - 1) K(t)`` on ``t >= 2``, and normalization means
``sum_t (t - 1) K(t) = 1``.

Every infinite sum here reduces to power tails

    P(q, s; r) = sum_{t >= s} L(t)**r * t**(-q),

which are returned as ``(lo, hi)`` brackets. For constant ``L`` they are
Hurwitz zeta values; for ``L = c0 * log(t + 1)**kappa`` a finite table is
summed and the remainder is bracketed by integrals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy import integrate, special

# relative slack put on Hurwitz zeta values before they enter a bracket
_ZETA_RTOL = 1e-14
_MIN_T_MAX = 1000
_NORM_RTOL = 1e-9


@dataclass(frozen=True)
class SlowlyVaryingSpec:
    """Slowly varying factor ``L`` of the kernel.

    Parameters
    ----------
    family : {"constant", "log_power"}
        ``constant``: ``L(t) = c0``. ``log_power``: ``L(t) = c0 * log(t + 1)**kappa``.
    c0 : float
        Positive multiplier. It cancels in the normalized kernel but is kept
        so configs round-trip.
    kappa : float
        Log exponent, used by ``log_power`` only.
    """

    family: Literal["constant", "log_power"] = "constant"
    c0: float = 1.0
    kappa: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in ("constant", "log_power"):
            raise ValueError(f"unknown slowly varying family {self.family!r}")
        if not (self.c0 > 0 and np.isfinite(self.c0)):
            raise ValueError("c0 must be a positive finite number")
        if not np.isfinite(self.kappa):
            raise ValueError("kappa must be finite")

    def log(self, t):
        """``log L(t)`` for ``t >= 1`` (vectorized)."""
        t = np.asarray(t, dtype=np.float64)
        if self.family == "constant":
            return np.full_like(t, np.log(self.c0))
        return np.log(self.c0) + self.kappa * np.log(np.log1p(t))

    def __call__(self, t):
        return np.exp(self.log(t))


def _remainder_integral(sv: SlowlyVaryingSpec, q: float, r: float,
                        x0: float) -> tuple[float, float]:
    """``int_{x0}^inf L(x)**r x**(-q) dx`` for the log_power family.

    Returns the value and the quadrature error estimate.
    """
    # x = x0 * e^y keeps the integrand smooth on [0, inf)
    c = sv.c0**r
    a = sv.kappa * r
    lx0 = np.log(x0)

    def f(y):
        return np.exp((1.0 - q) * y) * np.logaddexp(0.0, lx0 + y) ** a

    val, err = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    # widen by the reported quadrature error
    return c * x0 ** (1.0 - q) * val, c * x0 ** (1.0 - q) * err


class _PowerTail:
    """Brackets on ``P(q, s; r)`` for one ``(q, r)`` pair."""

    def __init__(self, sv: SlowlyVaryingSpec, q: float, r: float, t_max: int):
        self.sv, self.q, self.r, self.t_max = sv, q, r, t_max
        if q <= 1.0:
            raise ValueError("power tail diverges for q <= 1")
        if sv.family == "log_power":
            t = np.arange(t_max + 2, dtype=np.float64)
            f = np.zeros(t_max + 2, dtype=np.longdouble)
            f[1:] = np.exp(r * sv.log(t[1:]) - q * np.log(t[1:])).astype(np.longdouble)
            f[t_max + 1] = 0.0
            # suffix[s] = sum_{t=s}^{t_max} f(t)
            self._suffix = np.cumsum(f[::-1])[::-1]
            self._rem_lo, self._rem_hi = self._remainder(t_max)

    def _f(self, x: float) -> float:
        return float(np.exp(self.r * self.sv.log(x) - self.q * np.log(x)))

    def _convex_from(self, x0: float) -> bool:
        # sign of (log f)'' + ((log f)')^2 on a geometric grid out to 1e12 * x0;
        # beyond that the power term dominates for any finite kappa
        a, q = self.sv.kappa * self.r, self.q
        x = x0 * np.geomspace(1.0, 1e12, 400)
        lg = np.log1p(x)
        g1 = a / ((x + 1) * lg) - q / x
        g2 = -a * (lg + 1) / ((x + 1) ** 2 * lg**2) + q / x**2
        decreasing = np.all(g1 < 0)
        return bool(decreasing and np.all(g2 + g1**2 > 0))

    def _remainder(self, h: int) -> tuple[float, float]:
        """Bracket on ``sum_{t > h} f(t)``."""
        x1 = h + 1.0
        if self._convex_from(h + 0.5):
            lo, elo = _remainder_integral(self.sv, self.q, self.r, x1)
            hi, ehi = _remainder_integral(self.sv, self.q, self.r, h + 0.5)
            return lo - elo + 0.5 * self._f(x1), hi + ehi
        # monotone decreasing fallback
        lo, elo = _remainder_integral(self.sv, self.q, self.r, x1)
        hi, ehi = _remainder_integral(self.sv, self.q, self.r, float(h))
        return lo - elo, hi + ehi

    def bracket(self, s) -> tuple[np.ndarray, np.ndarray]:
        """``(lo, hi)`` arrays bracketing ``P(q, s; r)`` for integer ``s >= 1``."""
        s = np.asarray(s, dtype=np.int64)
        if np.any(s < 1):
            raise ValueError("tail start must be >= 1")
        if self.sv.family == "constant":
            val = self.sv.c0**self.r * special.zeta(self.q, s.astype(np.float64))
            return val * (1.0 - _ZETA_RTOL), val * (1.0 + _ZETA_RTOL)
        lo = np.empty(s.shape)
        hi = np.empty(s.shape)
        inside = s <= self.t_max + 1
        si = s[inside]
        base = self._suffix[si].astype(np.float64)
        lo[inside] = base * (1 - 1e-15) + self._rem_lo
        hi[inside] = base * (1 + 1e-15) + self._rem_hi
        for idx in zip(*np.nonzero(~inside)):
            b_lo, b_hi = self._remainder(int(s[idx]) - 1)
            lo[idx], hi[idx] = b_lo, b_hi
        return lo, hi

    def width_ratio(self) -> float:
        """Relative width of the remainder bracket against the total at s=1."""
        if self.sv.family == "constant":
            return 2 * _ZETA_RTOL
        lo, hi = self.bracket(np.array([1]))
        return float((hi[0] - lo[0]) / lo[0])


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Normalized kernel with tables, moments and tail machinery.

    Build with :func:`build_kernel`. Immutable; safe for concurrent reads.

    Attributes
    ----------
    alpha : float
        Tail offset; ``K(t) ~ t**-(2 + alpha)``.
    sv : SlowlyVaryingSpec
    norm : float
        Normalizing constant. It is the upper end of the bracket on the true
        constant, so the kernel carries total mass at most 1.
    norm_bracket : tuple of float
    t_max : int
        Explicit summation horizon and table length.
    table : ndarray
        ``K(t)`` for ``0 <= t <= t_max`` (zero for ``t < 2``).
    log_table : ndarray
        ``log K(t)`` (``-inf`` for ``t < 2``).
    """

    alpha: float
    sv: SlowlyVaryingSpec
    norm: float
    norm_bracket: tuple[float, float]
    t_max: int
    table: np.ndarray = field(repr=False)
    log_table: np.ndarray = field(repr=False)
    _tails: dict = field(default_factory=dict, repr=False, compare=False)

    # -- pointwise values -------------------------------------------------
    def log_K(self, t) -> np.ndarray:
        """``log K(t)``, computed directly for ``t`` beyond the table."""
        t = np.asarray(t)
        out = np.full(t.shape, -np.inf)
        ok = t >= 2
        tf = t[ok].astype(np.float64)
        out[ok] = self.sv.log(tf) - (2.0 + self.alpha) * np.log(tf) - np.log(self.norm)
        return out

    def K(self, t) -> np.ndarray:
        """``K(t)`` (vectorized; zero for ``t < 2``)."""
        t = np.asarray(t)
        if t.ndim == 0:
            return float(np.exp(self.log_K(t))) if t >= 2 else 0.0
        return np.exp(self.log_K(t))

    def values(self, t_hi: int) -> np.ndarray:
        """``K(t)`` for ``0 <= t <= t_hi``."""
        if t_hi <= self.t_max:
            return self.table[: t_hi + 1]
        return np.concatenate([self.table, self.K(np.arange(self.t_max + 1, t_hi + 1))])

    def scaled_values(self, t_hi: int) -> tuple[np.ndarray, np.ndarray]:
        """``(mant, exp)`` with ``K(t) = mant * 2**exp`` for ``0 <= t <= t_hi``."""
        k = self.values(t_hi)
        mant, ex = np.frexp(k)
        return mant, ex.astype(np.int64)

    # -- power tails ------------------------------------------------------
    def power_tail(self, q: float, s, r: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Bracket on ``sum_{t >= s} L(t)**r t**(-q)`` (unnormalized)."""
        key = (float(q), float(r))
        tail = self._tails.get(key)
        if tail is None:
            tail = _PowerTail(self.sv, q, r, self.t_max)
            self._tails[key] = tail
        return tail.bracket(s)

    def tail_mass(self, s):
        """``sum_{t >= s} K(t)`` (point value from the bracket midpoint)."""
        lo, hi = self.power_tail(2.0 + self.alpha, s)
        return 0.5 * (lo + hi) / self.norm

    def exit_mass_bracket(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Bracket on ``G(s) = sum_{t >= s} (t - s + 1) K(t)``.

        ``G(a + 2)`` is the probability that the first coordinate of a jump
        exceeds ``a``.
        """
        s = np.asarray(s, dtype=np.int64)
        a1_lo, a1_hi = self.power_tail(1.0 + self.alpha, s)
        a2_lo, a2_hi = self.power_tail(2.0 + self.alpha, s)
        lo = (a1_lo - (s - 1) * a2_hi) / self.norm
        hi = (a1_hi - (s - 1) * a2_lo) / self.norm
        return np.maximum(lo, 0.0), hi

    def exit_mass(self, s) -> np.ndarray:
        lo, hi = self.exit_mass_bracket(s)
        return 0.5 * (lo + hi)

    def exit_probability(self, a, b) -> np.ndarray:
        """Probability that a jump ``(i, j)`` leaves ``[1, a] x [1, b]``.

        Equals ``1 - sum_{i <= a, j <= b} K(i + j)`` computed without the
        cancellation of ``1 - ...`` by inclusion-exclusion on exit masses.
        """
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        return self.exit_mass(a + 2) + self.exit_mass(b + 2) - self.exit_mass(a + b + 2)

    # -- normalization and moments ---------------------------------------
    def normalization_check(self) -> tuple[float, float]:
        """Direct prefix sum of ``(t-1) K(t)`` to ``t_max`` plus the remainder bracket.

        Returns the ``(lo, hi)`` bracket on the total mass.
        """
        t = np.arange(2, self.t_max + 1)
        prefix = float(np.sum(((t - 1) * self.table[2:]).astype(np.longdouble)))
        g_lo, g_hi = self.exit_mass_bracket(np.array([self.t_max + 1]))
        # G(t_max + 1) counts (t - t_max) K(t); add the missing (t_max - 1) K(t)
        k_lo, k_hi = self.power_tail(2.0 + self.alpha, np.array([self.t_max + 1]))
        lo = prefix + g_lo[0] + (self.t_max - 1) * k_lo[0] / self.norm
        hi = prefix + g_hi[0] + (self.t_max - 1) * k_hi[0] / self.norm
        return lo, hi

    @cached_property
    def half_second_factorial_moment_bracket(self) -> tuple[float, float]:
        if self.alpha <= 1:
            return (np.inf, np.inf)
        a_lo, a_hi = self.power_tail(self.alpha, np.array([2]))
        b_lo, b_hi = self.power_tail(1.0 + self.alpha, np.array([2]))
        return (
            float((a_lo[0] - b_hi[0]) / (2 * self.norm)),
            float((a_hi[0] - b_lo[0]) / (2 * self.norm)),
        )

    @cached_property
    def mu_bracket(self) -> tuple[float, float]:
        """Mean first-coordinate jump, as ``sum_{a >= 0} P(i > a)``.

        Summed explicitly for ``a < t_max`` with an exact remainder.
        """
        if self.alpha <= 1:
            return (np.inf, np.inf)
        a = np.arange(0, self.t_max)
        g_lo, g_hi = self.exit_mass_bracket(a + 2)
        c = self.t_max + 1
        p0 = self.power_tail(self.alpha, np.array([c]))
        p1 = self.power_tail(1.0 + self.alpha, np.array([c]))
        p2 = self.power_tail(2.0 + self.alpha, np.array([c]))
        r_lo = (p0[0][0] - (2 * c - 1) * p1[1][0] + c * (c - 1) * p2[0][0]) / (2 * self.norm)
        r_hi = (p0[1][0] - (2 * c - 1) * p1[0][0] + c * (c - 1) * p2[1][0]) / (2 * self.norm)
        lo = float(np.sum(g_lo.astype(np.longdouble))) + max(r_lo, 0.0)
        hi = float(np.sum(g_hi.astype(np.longdouble))) + r_hi
        return lo, hi

    @property
    def mu(self) -> float:
        lo, hi = self.mu_bracket
        return 0.5 * (lo + hi)

    # -- sampling support -------------------------------------------------
    @cached_property
    def total_jump_cdf(self) -> np.ndarray:
        """CDF of the total jump ``t`` on ``0..t_max`` (mass ``(t-1) K(t)``)."""
        t = np.arange(self.t_max + 1)
        pmf = np.where(t >= 2, (t - 1) * self.table, 0.0)
        return np.cumsum(pmf)


def build_kernel(alpha: float, sv: SlowlyVaryingSpec | None = None,
                 t_max: int = 100_000) -> KernelSpec:
    """Normalize ``L(t) t**-(2+alpha)`` into a persistent renewal kernel.

    Parameters
    ----------
    alpha : float
        Must be positive and different from 1.
    sv : SlowlyVaryingSpec, optional
        Defaults to ``L = 1``.
    t_max : int
        Table length and summation horizon, at least 1000.

    Raises
    ------
    ValueError
        For ``alpha <= 0``, ``alpha == 1``, ``t_max < 1000``, or when the
        remainder bracket is wider than ``1e-9`` of the total mass.
    """
    sv = sv or SlowlyVaryingSpec()
    alpha = float(alpha)
    if not (alpha > 0 and np.isfinite(alpha)):
        raise ValueError("alpha must be positive")
    if alpha == 1.0:
        raise ValueError("alpha = 1 (marginal case) is not supported")
    t_max = int(t_max)
    if t_max < _MIN_T_MAX:
        raise ValueError(f"t_max must be at least {_MIN_T_MAX}")

    tails: dict = {}
    p1 = _PowerTail(sv, 1.0 + alpha, 1.0, t_max)
    p2 = _PowerTail(sv, 2.0 + alpha, 1.0, t_max)
    tails[(1.0 + alpha, 1.0)] = p1
    tails[(2.0 + alpha, 1.0)] = p2
    s1_lo, s1_hi = p1.bracket(np.array([2]))
    s2_lo, s2_hi = p2.bracket(np.array([2]))
    lo = float(s1_lo[0] - s2_hi[0])
    hi = float(s1_hi[0] - s2_lo[0])
    if (hi - lo) > _NORM_RTOL * hi:
        raise ValueError(
            f"t_max={t_max} too small: normalization bracket width "
            f"{(hi - lo) / hi:.2e} exceeds {_NORM_RTOL:g} of the mass"
        )
    norm = hi
    t = np.arange(t_max + 1)
    log_table = np.full(t_max + 1, -np.inf)
    tf = t[2:].astype(np.float64)
    log_table[2:] = sv.log(tf) - (2.0 + alpha) * np.log(tf) - np.log(norm)
    table = np.zeros(t_max + 1)
    table[2:] = np.exp(log_table[2:])
    table.flags.writeable = False
    log_table.flags.writeable = False
    return KernelSpec(alpha, sv, norm, (lo, hi), t_max, table, log_table, tails)


def half_second_factorial_moment(k: KernelSpec) -> float:
    """``1/2 sum_t t (t - 1) K(t)`` (bracket midpoint; ``inf`` for alpha <= 1)."""
    lo, hi = k.half_second_factorial_moment_bracket
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class TailSumTable:
    """Upper bounds on fractional-power kernel tails.

    ``T1[s] >= sum_{t >= s} K(t)**delta`` and
    ``T2[s] >= sum_{t >= s} (t - s + 1) K(t)**delta`` for ``0 <= s <= s_max``
    (entries below 2 equal the value at 2, since ``K`` vanishes there).
    With ``truncate_at`` set the sums stop at that ``t`` and are exact.
    """

    delta: float
    s_max: int
    T1: np.ndarray = field(repr=False)
    T2: np.ndarray = field(repr=False)
    truncate_at: int | None = None


def build_tail_sums(k: KernelSpec, delta: float, s_max: int,
                    truncate_at: int | None = None) -> TailSumTable:
    """Tail tables ``T1``, ``T2`` for the fractional moment reduction.

    Raises
    ------
    ValueError
        If ``(2 + alpha) * delta <= 2`` (``T2`` diverges) or ``delta``
        is outside ``(0, 1]``.
    """
    delta = float(delta)
    if not (0.0 < delta <= 1.0):
        raise ValueError("delta must lie in (0, 1]")
    p = (2.0 + k.alpha) * delta
    if truncate_at is None and p <= 2.0:
        raise ValueError(f"(2+alpha)*delta = {p:.4g} <= 2: second tail sum diverges")
    s = np.maximum(np.arange(s_max + 1), 2)
    if truncate_at is not None:
        H = int(truncate_at)
        kd = np.zeros(max(H, s_max) + 2, dtype=np.longdouble)
        kd[2 : H + 1] = np.exp(delta * k.log_K(np.arange(2, H + 1))).astype(np.longdouble)
        # suffix sums of K^delta and of t K^delta
        suf0 = np.cumsum(kd[::-1])[::-1]
        tt = np.arange(len(kd), dtype=np.longdouble)
        suf1 = np.cumsum((tt * kd)[::-1])[::-1]
        T1 = suf0[s].astype(np.float64)
        T2 = (suf1[s] - (s - 1) * suf0[s]).astype(np.float64)
        return TailSumTable(delta, s_max, T1, T2, H)
    nd = k.norm**delta
    a_lo, a_hi = k.power_tail(p, s, delta)
    T1 = a_hi / nd
    b_lo, b_hi = k.power_tail(p - 1.0, s, delta)
    T2 = (b_hi - (s - 1) * a_lo) / nd
    # the float evaluation of the brackets is already one-sided; a last
    # relative nudge covers the division and subtraction roundings
    T1 = T1 * (1 + 4e-16 * 8)
    T2 = T2 * (1 + 4e-16 * 8)
    # monotone envelope (running max from the right) guards rounding wiggles
    T1 = np.maximum.accumulate(T1[::-1])[::-1]
    T2 = np.maximum.accumulate(T2[::-1])[::-1]
    return TailSumTable(delta, s_max, T1, T2, None)
