"""Partition functions and free energies of the pinning model.

A configuration is a path of the bivariate renewal started at the origin;
each visited site ``(n, m)`` with ``n, m >= 1`` earns the weight
``z[n, m] = exp(beta * omega[n, m] + h)``. The constrained partition function
pins the path at ``(N, M)``; the free one lets it leave the box.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy import optimize, special

from ._backend import kernels
from .disorder import DisorderField, DisorderSpec
from .errors import RangeError, check_budget
from .fitting import ExponentFit, fit_loglog
from .kernel import KernelSpec
from .scaled import DiagScaledGrid, ScaledNonneg

log = logging.getLogger(__name__)

_LN2 = math.log(2.0)
MAX_LOG_WEIGHT = 700.0
MAX_GAMMA_DENOMINATOR = 64


# -- parameters ---------------------------------------------------------------

def rational_gamma(gamma, max_denominator: int = MAX_GAMMA_DENOMINATOR) -> Fraction:
    """Aspect ratio as a reduced fraction.

    Non-rational inputs (floats that are not exactly a small fraction) are
    replaced by the best continued-fraction convergent with denominator at
    most ``max_denominator``; the approximation is logged.
    """
    if isinstance(gamma, Fraction):
        g = gamma
    elif isinstance(gamma, tuple):
        g = Fraction(int(gamma[0]), int(gamma[1]))
    else:
        exact = Fraction(gamma)
        g = exact.limit_denominator(max_denominator)
        if g != exact:
            log.info("gamma=%r approximated by %s (error %.3g)", gamma, g, float(g) - float(gamma))
    if g <= 0:
        raise ValueError("gamma must be positive")
    return g


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature, pinning reward and aspect ratio ``M / N``."""

    beta: float = 0.0
    h: float = 0.0
    gamma: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        object.__setattr__(self, "gamma", rational_gamma(self.gamma))

    @property
    def p(self) -> int:
        """Numerator of ``gamma`` (second-strand steps per block)."""
        return self.gamma.numerator

    @property
    def q(self) -> int:
        """Denominator of ``gamma`` (first-strand steps per block)."""
        return self.gamma.denominator

    def M_of(self, N: int) -> int:
        """``floor(gamma * N)``."""
        return (N * self.p) // self.q

    def with_h(self, h: float) -> "ModelParams":
        return ModelParams(self.beta, h, self.gamma)


# -- constrained partition function ------------------------------------------

@dataclass(frozen=True, eq=False)
class PartitionGrid:
    """``Z^c[n, m]`` on ``[0, N] x [0, M]`` in block floating point.

    ``disorder`` is ``None`` for the homogeneous model.
    """

    kernel: KernelSpec
    N: int
    M: int
    params: ModelParams
    disorder: DisorderField | None
    grid: DiagScaledGrid = field(repr=False)
    omega: np.ndarray | None = field(default=None, repr=False)

    @cached_property
    def logZ(self) -> np.ndarray:
        """``log Z^c[n, m]`` (``-inf`` on the axes)."""
        return self.grid.log()

    def value(self, n: int, m: int) -> ScaledNonneg:
        return self.grid.value(n, m)

    def log_value(self, n: int, m: int) -> float:
        return self.value(n, m).log()


def _log_weights(params: ModelParams, omega: np.ndarray | None, N: int, M: int) -> np.ndarray:
    if omega is None:
        logw = np.full((N + 1, M + 1), float(params.h))
    else:
        logw = params.beta * omega + params.h
    inner = logw[1:, 1:]
    if inner.size and np.max(np.abs(inner)) > MAX_LOG_WEIGHT:
        raise RangeError("site weight outside double range (|beta*omega + h| > 700)")
    return np.ascontiguousarray(logw)


def constrained_partition(k: KernelSpec, params: ModelParams, fld: DisorderField | None,
                          N: int, M: int, budget: float | None = None,
                          omega: np.ndarray | None = None) -> PartitionGrid:
    """Constrained partition function on the whole rectangle ``[0, N] x [0, M]``.

    Parameters
    ----------
    k : KernelSpec
    params : ModelParams
    fld : DisorderField or None
        ``None`` gives the homogeneous model with ``z = e^h``.
    N, M : int
    budget : float, optional
        Bound on ``N * M * (N + M)``.
    omega : ndarray, optional
        Explicit disorder grid overriding ``fld`` (used by the enumeration
        oracles).

    Returns
    -------
    PartitionGrid
    """
    check_budget(N, M, budget)
    if omega is None and fld is not None and params.beta != 0.0:
        omega = fld.grid(N, M)
    elif params.beta == 0.0:
        omega = None
    logw = _log_weights(params, omega, N, M)
    km, ke = k.scaled_values(N + M)
    mant, dexp = kernels.pinned_dp(km, ke, logw)
    return PartitionGrid(k, N, M, params, fld, DiagScaledGrid(mant, dexp), omega)


def _logsumexp_diagonals(grid: DiagScaledGrid, weights: np.ndarray) -> float:
    """``log sum_{n,m} value[n, m] * weights[n, m]`` for nonnegative weights."""
    N, M = grid.mant.shape[0] - 1, grid.mant.shape[1] - 1
    d = np.add.outer(np.arange(N + 1), np.arange(M + 1))
    sums = np.bincount(d.ravel(), weights=(grid.mant * weights).ravel(), minlength=N + M + 1)
    ok = sums > 0
    if not np.any(ok):
        return -math.inf
    return float(special.logsumexp(np.log(sums[ok]) + grid.dexp[ok] * _LN2))


def exit_probability_grid(k: KernelSpec, N: int, M: int) -> np.ndarray:
    """``P_exit[n, m]``: a jump from ``(n, m)`` leaves ``[0, N] x [0, M]``."""
    a = np.arange(N, -1, -1)[:, None]
    b = np.arange(M, -1, -1)[None, :]
    return np.clip(k.exit_probability(a, b), 0.0, 1.0)


def free_partition(pg: PartitionGrid, k: KernelSpec | None = None) -> float:
    """``log Z^f`` on the full box of ``pg``.

    Sums ``Z^c[n, m] * P_exit(N - n, M - m)`` over the box: the last visited
    site is ``(n, m)`` and the following jump leaves the box.
    """
    k = k or pg.kernel
    pe = exit_probability_grid(k, pg.N, pg.M)
    return _logsumexp_diagonals(pg.grid, pe)


def rectangle_partition(k: KernelSpec, params: ModelParams, fld: DisorderField | None,
                        start: tuple[int, int], end: tuple[int, int]) -> float:
    """Partition function pinned at ``start`` and ``end`` (weights strictly after ``start``).

    Equal endpoints give 1; endpoints sharing exactly one coordinate give 0.
    Otherwise this is the constrained partition function of the field shifted
    to ``start``.
    """
    (a1, b1), (a2, b2) = start, end
    if a2 < a1 or b2 < b1:
        raise ValueError("end must dominate start coordinatewise")
    if (a1, b1) == (a2, b2):
        return 1.0
    if a1 == a2 or b1 == b2:
        return 0.0
    shifted = fld.shift(a1, b1) if fld is not None else None
    pg = constrained_partition(k, params, shifted, a2 - a1, b2 - b1)
    return float(pg.value(a2 - a1, b2 - b1))


# -- free energies -----------------------------------------------------------

def _map_ordered(fn, items, threads: int | None):
    """``[fn(x) for x in items]``; a thread pool keeps input order."""
    items = list(items)
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class FreeEnergyEstimate:
    """Replica statistics of ``(1/N) log Z^c[N, floor(gamma N)]``."""

    N: int
    M: int
    gamma: Fraction
    values: np.ndarray = field(repr=False)
    mean: float
    ci: float
    is_lower_bound: bool
    below_correlation_length: bool

    @property
    def std_err(self) -> float:
        n = len(self.values)
        return float(np.std(self.values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def _estimate(N: int, M: int, params: ModelParams, vals: np.ndarray) -> FreeEnergyEstimate:
    n = len(vals)
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    ci = 1.96 * se
    return FreeEnergyEstimate(N, M, params.gamma, vals, mean, ci,
                              N % params.q == 0, N * mean < 10.0)


def quenched_free_energy(k: KernelSpec, params: ModelParams, spec: DisorderSpec, N_list,
                         replicas: int, threads: int | None = None,
                         replica_offset: int = 0) -> list[FreeEnergyEstimate]:
    """Finite-volume quenched free energy for every ``N`` in ``N_list``.

    One DP per replica on the largest box serves all ``N`` because
    ``Z^c[n, m]`` does not depend on the box. ``is_lower_bound`` is set when
    ``q`` divides ``N``: then the super-additive sequence makes the replica
    mean a lower bound on the limit.
    """
    N_list = sorted(int(n) for n in N_list)
    Nmax = N_list[-1]
    Mmax = params.M_of(Nmax)
    Ms = [params.M_of(N) for N in N_list]

    def one(r: int) -> np.ndarray:
        pg = constrained_partition(k, params, spec.field(replica_offset + r), Nmax, Mmax)
        return np.array([pg.log_value(N, M) / N for N, M in zip(N_list, Ms)])

    rows = np.array(_map_ordered(one, range(replicas), threads))
    return [_estimate(N, M, params, rows[:, i]) for i, (N, M) in enumerate(zip(N_list, Ms))]


@dataclass(frozen=True)
class AnnealedQuantities:
    """Annealed model at ``(beta, h)``: the homogeneous model at ``h + log Q(beta)``."""

    h_c_annealed: float
    h_shifted: float
    N: int | None = None
    M: int | None = None
    log_annealed_Z: float | None = None

    @property
    def annealed_F_N(self) -> float | None:
        return None if self.log_annealed_Z is None else self.log_annealed_Z / self.N


def annealed_quantities(k: KernelSpec, params: ModelParams, spec: DisorderSpec,
                        N: int | None = None) -> AnnealedQuantities:
    """Annealed critical point ``-log Q(beta)`` and, given ``N``, ``log E Z^c[N, M]``."""
    lq = spec.log_Q(params.beta)
    hc = -lq
    hs = params.h + lq
    if N is None:
        return AnnealedQuantities(hc, hs)
    M = params.M_of(N)
    pg = constrained_partition(k, ModelParams(0.0, hs, params.gamma), None, N, M)
    return AnnealedQuantities(hc, hs, N, M, pg.log_value(N, M))


def _laplace_mass(k: KernelSpec, a: float, rtol: float = 1e-13) -> float:
    """``sum_{t >= 2} (t - 1) K(t) e^{-a t}`` including ``t`` beyond ``t_max``."""
    t = np.arange(2, k.t_max + 1)
    s = float(np.sum((t - 1) * k.table[2:] * np.exp(-a * t)))
    # continue past the table until the damping makes the rest negligible
    t0 = k.t_max + 1
    chunk = 1 << 20
    while True:
        tt = np.arange(t0, t0 + chunk, dtype=np.float64)
        part = float(np.sum((tt - 1) * np.exp(k.log_K(tt) - a * tt)))
        s += part
        t0 += chunk
        # remaining mass is at most e^{-a t0} times the undamped tail (<= 1)
        if math.exp(-a * t0) < rtol * s or t0 > 10**10:
            break
    return s


def homogeneous_free_energy_limit(k: KernelSpec, h: float) -> float:
    """Infinite-volume homogeneous free energy at ``gamma = 1``.

    The generating function of ``Z^c`` is ``1 / (1 - e^h Khat(x, y))``; by
    symmetry the dominant singularity on the diagonal is at ``x = y = e^{-a}``
    with ``e^h sum_t (t - 1) K(t) e^{-a t} = 1``, and ``F = 2 a``.
    Zero for ``h <= 0``.
    """
    if h <= 0:
        return 0.0
    target = math.exp(-h)
    f = lambda a: _laplace_mass(k, a) - target
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
    lo = hi / 2.0
    while f(lo) < 0:
        lo /= 2.0
    a = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-12)
    return 2.0 * a


@dataclass(frozen=True)
class HomogeneousScan:
    """Finite-volume free energies ``F_N(h)`` and their log-log fit."""

    alpha: float
    gamma: Fraction
    N: int
    h: np.ndarray
    F_N: np.ndarray
    exit_flag: np.ndarray
    fit: ExponentFit | None
    F_limit: np.ndarray | None = None
    fit_limit: ExponentFit | None = None
    slope_ratio: float | None = None  # F_N / (h / mu) for alpha > 1


def homogeneous_critical_scan(k: KernelSpec, gamma, h_list, N: int,
                              with_limit: bool = False,
                              threads: int | None = None) -> HomogeneousScan:
    """``F_N(h) = (1/N) log Z^c[N, floor(gamma N)]`` on a list of ``h``.

    The fit of ``log F_N`` against ``log h`` uses the points with ``F_N > 0``;
    ``exit_flag`` marks ``N F_N < 10`` (box below the correlation length).
    For ``alpha > 1`` the ratio of ``F_N / h`` at the smallest ``h`` to
    ``1 / mu`` is reported. ``with_limit`` adds the exact infinite-volume
    value for ``gamma = 1``.
    """
    g = rational_gamma(gamma)
    h = np.asarray(h_list, dtype=np.float64)
    M = (N * g.numerator) // g.denominator

    def one(hv: float) -> float:
        pg = constrained_partition(k, ModelParams(0.0, float(hv), g), None, N, M)
        return pg.log_value(N, M) / N

    F = np.array(_map_ordered(one, h, threads))
    flag = N * F < 10.0
    pos = F > 0
    fit = None
    if np.count_nonzero(pos) >= 3 and np.all(h > 0):
        try:
            fit = fit_loglog(h[pos], F[pos], min_points=3)
        except ValueError:
            fit = None
    else:
        log.warning("fewer than 3 positive F_N values; no exponent fit")
    if np.any(flag):
        log.warning("N * F_N < 10 at %d of %d points: fit unreliable", np.count_nonzero(flag), len(h))
    F_lim = fit_lim = None
    if with_limit and g == 1:
        F_lim = np.array([homogeneous_free_energy_limit(k, float(x)) for x in h])
        ok = F_lim > 0
        if np.count_nonzero(ok) >= 3:
            fit_lim = fit_loglog(h[ok], F_lim[ok], min_points=3)
    ratio = None
    if k.alpha > 1 and np.any(h > 0):
        i = int(np.argmin(np.where(h > 0, h, np.inf)))
        ratio = float(F[i] / h[i] * k.mu)
    return HomogeneousScan(k.alpha, g, N, h, F, flag, fit, F_lim, fit_lim, ratio)


# -- finite-volume inequalities ------------------------------------------------

@dataclass(frozen=True)
class SandwichResult:
    """``Z^c <= Z^f`` and the upper envelope on ``log(Z^f / Z^c)``.

    ``envelope`` is explicit: with ``Kmin``/``Kmax`` the extreme kernel values
    on ``[2, N + M]``,
    ``Z^f / Z^c <= 1 + N M e^{-h - beta w_NM} / Kmin
    + (N + M) (Kmax / Kmin) e^{-beta w_NM} max_boundary e^{beta w}``.
    ``implied_constant`` is ``log(Z^f/Z^c) - (3 + alpha_plus) log(N + M)
    - beta (max_boundary w - w_NM)``, the constant the power-law form needs.
    """

    ok: bool
    lower_ok: bool
    upper_ok: bool
    log_ratio: float
    envelope: float
    implied_constant: float


def sandwich_check(pg: PartitionGrid, k: KernelSpec | None = None,
                   alpha_plus_offset: float = 0.1) -> SandwichResult:
    """Pathwise free/constrained comparison on the full box of ``pg``."""
    k = k or pg.kernel
    N, M, beta, h = pg.N, pg.M, pg.params.beta, pg.params.h
    log_c = pg.log_value(N, M)
    log_f = free_partition(pg, k)
    lr = log_f - log_c
    Kv = k.values(N + M)[2:]
    log_kmin = math.log(float(Kv.min()))
    log_kmax = math.log(float(Kv.max()))
    if pg.omega is not None and beta != 0.0:
        w_nm = float(pg.omega[N, M])
        bdry = max(float(np.max(pg.omega[1:N + 1, M])), float(np.max(pg.omega[N, 1:M + 1])))
    else:
        w_nm = bdry = 0.0
    t1 = math.log(N * M) - h - beta * w_nm - log_kmin
    t2 = math.log(N + M) + log_kmax - log_kmin + beta * (bdry - w_nm)
    env = float(np.logaddexp(0.0, np.logaddexp(t1, t2)))
    # the grid holds Z^c to ~1e-13 relative, so allow that much slack
    lower_ok = lr >= -1e-12
    upper_ok = lr <= env + 1e-12
    implied = lr - (3.0 + k.alpha + alpha_plus_offset) * math.log(N + M) - beta * (bdry - w_nm)
    return SandwichResult(lower_ok and upper_ok, lower_ok, upper_ok, lr, env, implied)


@dataclass(frozen=True)
class SuperadditivityResult:
    """``log Z_{j1+j2} - log Z_{j1} - log Z_{j2}(shifted)``; must be ``>= 0``."""

    holds: bool
    margin: float
    log_lhs: float
    log_rhs: float


def superadditivity_check(k: KernelSpec, params: ModelParams, spec: DisorderSpec,
                          j1: int, j2: int, seed: int | None = None,
                          replica: int = 0, rtol: float = 1e-12) -> SuperadditivityResult:
    """Pathwise super-multiplicativity over blocks of ``q x p`` sites.

    ``Z_j`` is the constrained partition function at ``(j q, j p)``; the
    second factor uses the field shifted by ``(j1 q, j1 p)``. ``rtol`` absorbs
    the relative rounding of the DP.
    """
    if seed is not None:
        spec = DisorderSpec(spec.distribution, int(seed))
    fld = spec.field(replica)
    q, p = params.q, params.p
    big = constrained_partition(k, params, fld, (j1 + j2) * q, (j1 + j2) * p)
    lhs = big.log_value((j1 + j2) * q, (j1 + j2) * p)
    z1 = big.log_value(j1 * q, j1 * p)
    sh = constrained_partition(k, params, fld.shift(j1 * q, j1 * p), j2 * q, j2 * p)
    z2 = sh.log_value(j2 * q, j2 * p)
    rhs = z1 + z2
    margin = lhs - rhs
    return SuperadditivityResult(bool(margin >= -rtol), float(margin), float(lhs), float(rhs))
