"""The intersection renewal ``sigma = tau ∩ tau'`` of two independent copies.

``sigma`` is itself a bivariate renewal with mass function ``v = u**2``. Its
inter-arrival law ``q`` follows from ``v = delta_0 + q * v``. Points of
``sigma`` have distinct coordinate sums, so ``s = n + m`` along ``sigma``
is a one-dimensional renewal (written ``sigma_bar``) with mass
``ubar[s] = sum_{n+m=s} v[n, m]``; its first-arrival law gives the tail
``P(sigma_bar_1 > s)`` on full anti-diagonals without the 2-D inversion.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft
from scipy import optimize, signal

from ._backend import kernels
from .errors import InconclusiveError, RangeError
from .fitting import ExponentFit, dyadic_points, fit_loglog
from .kernel import KernelSpec
from .renewal import RenewalMassGrid

log = logging.getLogger(__name__)

NEG_TOL = 1e-14
DEFAULT_Q_BOX = 128


def _clamp_negatives(x: np.ndarray, what: str) -> tuple[np.ndarray, int]:
    bad = x < -NEG_TOL
    if np.any(bad):
        raise ArithmeticError(
            f"{what}: entry {x[bad].min():.3e} below -{NEG_TOL:g}; inversion unstable"
        )
    neg = x < 0
    n_neg = int(np.count_nonzero(neg))
    if n_neg:
        log.info("%s: clamped %d tiny negative entries", what, n_neg)
        x = np.where(neg, 0.0, x)
    return x, n_neg


def invert_1d(ubar: np.ndarray) -> np.ndarray:
    """First-arrival law of a 1-D renewal from its mass function.

    Solves ``ubar[s] = sum_{t=1}^{s} f[t] ubar[s - t]`` with ``ubar[0] = 1``.
    """
    S = len(ubar) - 1
    f = np.zeros(S + 1)
    for s in range(1, S + 1):
        f[s] = ubar[s] - np.dot(f[1:s], ubar[s - 1 : 0 : -1])
    return f


@dataclass(frozen=True, eq=False)
class IntersectionTables:
    """Exact tables for ``sigma`` on a square or rectangular grid.

    Attributes
    ----------
    v : ndarray
        ``P((n, m) in sigma) = u[n, m]**2``.
    U : ndarray
        ``U[N', M'] = sum_{n <= N', m <= M'} v[n, m]``.
    q : ndarray
        ``P(sigma_1 = (n, m))`` on the leading ``q_box x q_box`` sub-grid.
    ubar, f_bar : ndarray
        Mass function and first-arrival law of ``sigma_bar`` for
        ``s <= min(N, M)``.
    tail : ndarray
        ``tail[s] = P(sigma_bar_1 > s)``.
    sigma_total_mass : float
        ``P(sigma_bar_1 <= S)``, a lower bound on ``P(sigma_1 < inf)`` that
        increases with the grid.
    clamped : int
        Tiny negative entries set to zero during the inversions.
    """

    kernel: KernelSpec
    N: int
    M: int
    v: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    ubar: np.ndarray = field(repr=False)
    f_bar: np.ndarray = field(repr=False)
    tail: np.ndarray = field(repr=False)
    sigma_total_mass: float
    clamped: int

    @property
    def q_box(self) -> int:
        return self.q.shape[0] - 1

    @cached_property
    def q_prefix(self) -> np.ndarray:
        """2-D prefix sums of ``q``."""
        return self.q.cumsum(0).cumsum(1)

    def U_diag(self, n) -> np.ndarray:
        n = np.asarray(n)
        return self.U[n, n]

    def reconstruction_error(self) -> float:
        """Max relative error of ``delta_0 + q * v`` against ``v`` on the q sub-grid."""
        b = self.q_box
        v = np.ascontiguousarray(self.v[: b + 1, : b + 1])
        rec = kernels.forward_convolve(self.q, v)
        rec[0, 0] = 1.0
        mask = v > 0
        return float(np.max(np.abs(rec[mask] - v[mask]) / v[mask]))

    def laplace_identity_residual(self, lam: float) -> float:
        """``|(1 - Khat(lam)) Uhat(lam) - 1|`` with sums over ``s <= S``."""
        s = np.arange(len(self.ubar))
        w = np.exp(-lam * s)
        return float(abs((1.0 - np.dot(w, self.f_bar)) * np.dot(w, self.ubar) - 1.0))


def intersection_tables(grid: RenewalMassGrid, q_box: int = DEFAULT_Q_BOX) -> IntersectionTables:
    """Build :class:`IntersectionTables` from a renewal mass grid."""
    u = grid.u
    if not np.all(np.isfinite(u)):
        raise RangeError("renewal mass outside double range; cannot square")
    v = u * u
    U = v.cumsum(0).cumsum(1)
    S = min(grid.N, grid.M)
    b = min(q_box, S)
    q, nq = _clamp_negatives(kernels.invert_renewal(np.ascontiguousarray(v[: b + 1, : b + 1])), "q")
    ubar = np.zeros(S + 1)
    for s in range(S + 1):
        n = np.arange(max(0, s - grid.M), min(s, grid.N) + 1)
        ubar[s] = v[n, s - n].sum()
    f_bar, nf = _clamp_negatives(invert_1d(ubar), "sigma_bar")
    cum = np.cumsum(f_bar)
    tail = 1.0 - cum
    return IntersectionTables(
        grid.kernel, grid.N, grid.M, v, U, q, ubar, f_bar, tail, float(cum[-1]), nq + nf
    )


# -- overlap moment generating function -------------------------------------

def overlap_mgf_exact(t: IntersectionTables, lam: float, N: int, M: int) -> float:
    """``E[exp(lam * |sigma ∩ (0, N] x (0, M]|)]`` from ``q`` and the tilted renewal.

    Sums ``w[n, m] * P(next sigma jump leaves the box)`` over the box and
    the origin, where ``w = delta_0 + e**lam * (q * w)``. Needs
    ``N, M <= q_box``.
    """
    if N > t.q_box or M > t.q_box:
        raise ValueError(f"exact route needs N, M <= q_box = {t.q_box}")
    if lam == 0.0:
        return 1.0
    q = np.ascontiguousarray(t.q[: N + 1, : M + 1])
    w = kernels.tilted_renewal(q, float(np.exp(lam)))
    if not np.all(np.isfinite(w)):
        raise RangeError("tilted renewal overflowed")
    Q = t.q_prefix
    # P(next jump stays in the box) from (n, m) = Q[N - n, M - m]
    stay = Q[N::-1, M::-1][: N + 1, : M + 1]
    val = float(np.sum(w * (1.0 - stay)))
    if not np.isfinite(val):
        raise RangeError("overlap mgf overflowed")
    return val


def _fft_mul(a: np.ndarray, b: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    n0, m0 = shape
    fs = (sfft.next_fast_len(2 * n0 - 1, real=True), sfft.next_fast_len(2 * m0 - 1, real=True))
    out = sfft.irfft2(sfft.rfft2(a, fs) * sfft.rfft2(b, fs), fs)
    return out[:n0, :m0]


def _chain_tilt(vp: np.ndarray, log_x: float) -> tuple[float, float]:
    """Exponential tilt ``(a, b) >= 0`` that keeps the chain weights of order one.

    With ``x v'[y] e^{-a n - b m}`` of mass 1 on the box, the tilted weights
    are visit probabilities of a renewal, so ``W[y] <= e^{a n + b m}``. The
    FFT error in ``W[y]`` scales with that bound, hence ``a N + b M`` (its
    maximum on the box) is minimized along the mass-1 curve. ``(0, 0)``
    when ``x v'`` has mass at most 1.
    """
    if not math.isfinite(log_x) or log_x + math.log(vp.sum()) <= 0.0:
        return 0.0, 0.0
    N, M = vp.shape[0] - 1, vp.shape[1] - 1
    nz = np.nonzero(vp > 0)
    y1 = nz[0].astype(np.float64)
    y2 = nz[1].astype(np.float64)
    lv = np.log(vp[nz]) + log_x

    def log_mass(a: float, b: float) -> float:
        z = lv - a * y1 - b * y2
        top = z.max()
        return float(top + np.log(np.exp(z - top).sum()))

    def root(f) -> float:
        hi = 1.0
        while f(hi) > 0.0:
            hi *= 2.0
        return float(optimize.brentq(f, 0.0, hi, xtol=1e-12, rtol=1e-12))

    if N == M and np.allclose(vp, vp.T, rtol=1e-12, atol=0.0):
        c = root(lambda s: log_mass(s, s))
        return c, c
    a0 = root(lambda a: log_mass(a, 0.0))
    b0 = root(lambda b: log_mass(0.0, b))

    def b_of(a: float) -> float:
        if log_mass(a, 0.0) <= 0.0:
            return 0.0
        return float(optimize.brentq(lambda b: log_mass(a, b), 0.0, b0, xtol=1e-12, rtol=1e-12))

    res = optimize.minimize_scalar(lambda a: a * N + b_of(a) * M, bounds=(0.0, a0),
                                   method="bounded", options={"xatol": 1e-8 * max(a0, 1e-300)})
    cands = [(0.0, b0), (a0, 0.0), (float(res.x), b_of(float(res.x)))]
    return min(cands, key=lambda ab: ab[0] * N + ab[1] * M)


def chain_weights_scaled(t: IntersectionTables, lam: float, N: int,
                         M: int) -> tuple[np.ndarray, float, float]:
    """``(W_t, a, b)`` with ``W[n, m] = W_t[n, m] e^{a n + b m}``; see :func:`chain_weights`.

    Writing ``e**lam = 1 + x``, the binomial expansion of ``(1 + x)**H``
    gives ``W = sum_j x**j (v')**(*j)`` where ``v'`` is ``v`` without the
    origin, so ``W`` is the power-series inverse of ``delta_0 - x v'``.
    Rescaling by ``e^{-a n - b m}`` (see :func:`_chain_tilt`) turns
    ``x v'`` into a measure of mass at most 1 on the box, so ``W_t`` stays
    O(1) and the inversion does not cancel large terms. It is computed by Newton iteration on truncated
    2-D series with FFT products; each step squares the residual, which
    lives on ``n, m >= 2**k``.
    """
    shape = (N + 1, M + 1)
    vp = np.array(t.v[: N + 1, : M + 1], dtype=np.float64)
    vp[0, 0] = 0.0
    if lam > 0.0:
        # log(e**lam - 1) without overflowing for large lam
        log_x = lam + math.log(-math.expm1(-lam))
        a, b = _chain_tilt(vp, log_x)
        with np.errstate(divide="ignore"):
            A = -np.exp(np.log(vp) + log_x
                        - np.add.outer(a * np.arange(N + 1), b * np.arange(M + 1)))
    else:
        a = b = 0.0
        A = -math.expm1(lam) * vp
    A[0, 0] = 1.0
    B = np.zeros(shape)
    B[0, 0] = 1.0
    reach = 1
    while reach <= max(N, M):
        AB = _fft_mul(A, B, shape)
        E = -AB
        E[0, 0] += 1.0
        B = B + _fft_mul(B, E, shape)
        reach *= 2
    if not np.all(np.isfinite(B)):
        raise RangeError("chain expansion overflowed")
    if lam > 0.0:
        B = np.maximum(B, 0.0)  # all terms are nonnegative; drop FFT rounding
    return B, a, b


def chain_weights(t: IntersectionTables, lam: float, N: int, M: int) -> np.ndarray:
    """Weights ``W`` with ``sum_{y <= (N, M)} W[y] = E[exp(lam H_{N,M})]``.

    Raises
    ------
    RangeError
        If ``W`` leaves double range.
    """
    B, a, b = chain_weights_scaled(t, lam, N, M)
    with np.errstate(over="ignore"):
        W = B * np.exp(np.add.outer(a * np.arange(N + 1), b * np.arange(M + 1)))
    if not np.all(np.isfinite(W)):
        raise RangeError("chain weights overflowed")
    return W


def _discounted_box_sums(B: np.ndarray, a: float, b: float, N_list: np.ndarray,
                         M_list: np.ndarray) -> np.ndarray:
    # sum_{n<=N, m<=M} B[n, m] e^{a n + b m} as e^{a N + b M} times a discounted sum
    if a == 0.0 and b == 0.0:
        P = B.cumsum(0).cumsum(1)
        return P[N_list, M_list]
    D = signal.lfilter([1.0], [1.0, -math.exp(-a)], B, axis=0)
    D = signal.lfilter([1.0], [1.0, -math.exp(-b)], D, axis=1)
    with np.errstate(divide="ignore", over="ignore"):
        return np.exp(a * N_list + b * M_list + np.log(D[N_list, M_list]))


def overlap_mgf(t: IntersectionTables, lam: float, N: int, M: int,
                method: str = "auto") -> float:
    """``E^{⊗2}[exp(lam * |sigma ∩ (0, N] x (0, M]|)]``, the second-moment factor.

    Parameters
    ----------
    method : {"auto", "exact", "chain"}
        ``exact`` uses ``q`` and the tilted recursion (``N, M <= q_box``);
        ``chain`` uses :func:`chain_weights`. ``auto`` picks ``exact`` when
        the box fits in the ``q`` sub-grid.
    """
    if lam == 0.0:
        return 1.0
    if N > t.N or M > t.M:
        raise ValueError("box exceeds the tables")
    if method == "auto":
        method = "exact" if max(N, M) <= t.q_box else "chain"
    if method == "exact":
        return overlap_mgf_exact(t, lam, N, M)
    if method != "chain":
        raise ValueError(f"unknown method {method!r}")
    B, a, b = chain_weights_scaled(t, lam, N, M)
    val = float(_discounted_box_sums(B, a, b, np.array([N]), np.array([M]))[0])
    if not np.isfinite(val):
        raise RangeError("overlap mgf overflowed")
    return val


def overlap_mgf_curve(t: IntersectionTables, lam: float, N_list, gamma: float = 1.0) -> np.ndarray:
    """Overlap mgf at ``(N, floor(gamma N))`` for every ``N`` from one chain grid."""
    N_list = np.asarray(N_list, dtype=np.int64)
    if lam == 0.0:
        return np.ones(len(N_list))
    Ms = np.floor(gamma * N_list).astype(np.int64)
    Nm, Mm = int(N_list.max()), int(Ms.max())
    B, a, b = chain_weights_scaled(t, lam, Nm, Mm)
    return _discounted_box_sums(B, a, b, N_list, Ms)


# -- termination, tail constant, exponents -----------------------------------

@dataclass(frozen=True)
class TerminationReport:
    """Bracketed lifetime statistics of ``sigma``.

    ``E_abs_sigma`` counts the origin, so that ``|sigma|`` is geometric with
    ``P(|sigma| >= j) = p**(j - 1)`` and ``E_abs_sigma = 1 / (1 - p)`` where
    ``p = P(sigma_1 < inf)``.
    """

    persistent: bool
    E_abs_sigma: tuple[float, float]
    P_sigma1_finite: tuple[float, float]
    increment_ratio: float | None = None


def sigma_termination_report(t: IntersectionTables, k: KernelSpec | None = None,
                             max_rel_width: float = 0.05) -> TerminationReport:
    """Expected size of ``sigma`` and ``P(sigma_1 < inf)`` with brackets.

    For ``alpha < 1`` the lower end is ``U[N, N]``; the upper end adds a
    geometric extrapolation of the dyadic increments of ``U``, doubled.

    Raises
    ------
    InconclusiveError
        When increments do not decay geometrically or the bracket is wider
        than ``max_rel_width`` of its lower end.
    """
    k = k or t.kernel
    if k.alpha == 1.0:
        raise ValueError("alpha = 1 is not supported")
    if k.alpha > 1:
        return TerminationReport(True, (np.inf, np.inf), (1.0, 1.0))
    S = min(t.N, t.M)
    n = dyadic_points(8, S)
    if len(n) < 4:
        raise InconclusiveError("grid too small to extrapolate U")
    Un = t.U[n, n]
    inc = np.diff(Un)
    if np.any(inc <= 0):
        raise InconclusiveError("U increments not positive")
    fit = fit_loglog(n[1:], inc, min_points=3)
    ratio = 2.0**fit.slope
    # also require the last observed ratio to be below 1
    last_ratio = inc[-1] / inc[-2]
    r = max(ratio, last_ratio)
    if r >= 1.0:
        raise InconclusiveError(f"U increments not decaying (ratio {r:.3f})")
    lo = float(t.U[S, S])
    hi = lo + 2.0 * inc[-1] * r / (1.0 - r)
    if (hi - lo) > max_rel_width * lo:
        raise InconclusiveError(f"E|sigma| bracket [{lo:.6g}, {hi:.6g}] too wide")
    p_lo, p_hi = 1.0 - 1.0 / lo, 1.0 - 1.0 / hi
    return TerminationReport(False, (lo, hi), (p_lo, p_hi), float(r))


def tail_constant_target(rho: float) -> float:
    """``2**rho sin(pi rho) / (pi rho)`` (limit 1 as ``rho -> 0``)."""
    if rho == 0:
        return 1.0
    return float(2.0**rho * np.sin(np.pi * rho) / (np.pi * rho))


def tail_constant_check(t: IntersectionTables, rho: float, N_list) -> tuple[np.ndarray, float]:
    """``P(sigma_bar_1 > N) * U[N, N]`` for each ``N`` and the predicted limit."""
    if t.kernel.alpha <= 1:
        raise ValueError("tail constant applies to alpha > 1")
    N_list = np.asarray(N_list, dtype=np.int64)
    return t.tail[N_list] * t.U[N_list, N_list], tail_constant_target(rho)


def fit_U_exponent(t: IntersectionTables, window=(64, 2048)) -> ExponentFit:
    """Slope of ``log U[N, N]`` on dyadic ``N`` inside ``window``."""
    if t.kernel.alpha <= 1:
        raise ValueError("U grows only for alpha > 1")
    lo, hi = window
    n = dyadic_points(lo, min(hi, t.N, t.M))
    return fit_loglog(n, t.U[n, n], (lo, hi))


def fit_U_increment_exponent(t: IntersectionTables, window=(64, 2048)) -> ExponentFit:
    """Slope of the dyadic increments ``U[2N, 2N] - U[N, N]``; same exponent,
    free of the additive constant in ``U``."""
    lo, hi = window
    n = dyadic_points(lo, min(hi, t.N, t.M))
    inc = t.U[n[1:], n[1:]] - t.U[n[:-1], n[:-1]]
    return fit_loglog(n[1:], inc, (lo, hi), min_points=3)


def U_increment_ratios(t: IntersectionTables, N_list) -> np.ndarray:
    """``(U[N, N] - U[N/2, N/2]) / U[N, N]`` for each dyadic ``N``."""
    N_list = np.asarray(N_list, dtype=np.int64)
    return (t.U[N_list, N_list] - t.U[N_list // 2, N_list // 2]) / t.U[N_list, N_list]
