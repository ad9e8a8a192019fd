"""Exact bivariate renewal computations.

The renewal ``tau`` starts at the origin and makes i.i.d. jumps ``(i, j)``
with ``P(jump = (i, j)) = K(i + j)``. This module computes its mass function
``u[n, m] = P((n, m) in tau)`` on a rectangle, the law of the ``k``-th point,
samples paths, and fits the exponents of the renewal theorems.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._backend import kernels
from .errors import check_budget
from .fitting import ExponentFit, dyadic_points, fit_loglog, fit_loglog_logy
from .kernel import KernelSpec
from .scaled import DiagScaledGrid, ScaledNonneg


@dataclass(frozen=True, eq=False)
class RenewalMassGrid:
    """``u[n, m] = P((n, m) in tau)`` for ``0 <= n <= N``, ``0 <= m <= M``.

    Values are held in block floating point (see :class:`DiagScaledGrid`).
    """

    kernel: KernelSpec
    N: int
    M: int
    grid: DiagScaledGrid

    @cached_property
    def log_u(self) -> np.ndarray:
        """Natural log of ``u`` (``-inf`` on the axes)."""
        return self.grid.log()

    @cached_property
    def u(self) -> np.ndarray:
        """``u`` as doubles; fine whenever the values lie in double range."""
        return self.grid.to_float()

    def value(self, n: int, m: int) -> ScaledNonneg:
        return self.grid.value(n, m)

    @cached_property
    def diag_prefix(self) -> list[np.ndarray]:
        """Per anti-diagonal prefix sums of mantissas, first coordinate ascending.

        ``diag_prefix[d][k]`` sums the first ``k`` cells of diagonal ``d``
        (cells ordered by ``n`` from ``max(0, d - M)``); multiply by
        ``2**grid.dexp[d]`` for actual values.
        """
        out = []
        for d in range(self.N + self.M + 1):
            a = np.arange(max(0, d - self.M), min(d, self.N) + 1)
            out.append(np.concatenate([[0.0], np.cumsum(self.grid.mant[a, d - a])]))
        return out

    def diag_range_sum(self, d: int, n_lo: int, n_hi: int) -> ScaledNonneg:
        """``sum_{n_lo <= n <= n_hi} u[n, d - n]`` restricted to the rectangle."""
        a0 = max(0, d - self.M)
        lo = max(n_lo, a0)
        hi = min(n_hi, d, self.N)
        if lo > hi:
            return ScaledNonneg(0.0, 0)
        pre = self.diag_prefix[d]
        return ScaledNonneg.from_parts(float(pre[hi - a0 + 1] - pre[lo - a0]),
                                       int(self.grid.dexp[d]))

    def diagonal_mass(self) -> np.ndarray:
        """``sum_{n + m = d} u[n, m]`` for every ``d`` (as doubles)."""
        return np.array([float(self.diag_range_sum(d, 0, d))
                         for d in range(self.N + self.M + 1)])


def renewal_mass(k: KernelSpec, N: int, M: int, budget: float | None = None) -> RenewalMassGrid:
    """Renewal mass function on ``[0, N] x [0, M]``.

    Uses the anti-diagonal prefix-sum recursion, O(N M (N + M)).

    Raises
    ------
    BudgetError
        If ``N * M * (N + M)`` exceeds ``budget``.
    """
    check_budget(N, M, budget)
    km, ke = k.scaled_values(N + M)
    mant, dexp = kernels.pinned_dp(km, ke, np.zeros((N + 1, M + 1)))
    return RenewalMassGrid(k, N, M, DiagScaledGrid(mant, dexp))


# -- sampling ---------------------------------------------------------------

def sample_total_jumps(k: KernelSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw totals ``t = i + j`` with law ``(t - 1) K(t)``.

    Inverse CDF on ``[2, t_max]``; beyond ``t_max`` a continuous Pareto tail
    with the kernel's index ``alpha``, rounded up.
    """
    cdf = k.total_jump_cdf
    c_T = cdf[-1]
    u = rng.random(size)
    t = np.searchsorted(cdf, u, side="right").astype(np.int64)
    beyond = u >= c_T
    if np.any(beyond):
        v = (1.0 - u[beyond]) / (1.0 - c_T)
        v = np.clip(v, 1e-300, 1.0)
        x = k.t_max * v ** (-1.0 / k.alpha)
        t[beyond] = np.maximum(k.t_max + 1, np.ceil(np.minimum(x, 9e18))).astype(np.int64)
    return t


def sample_jumps(k: KernelSpec, size: int, rng: np.random.Generator):
    """Jumps ``(i, j)``: the total from :func:`sample_total_jumps`, then ``i``
    uniform on ``1..t-1``."""
    t = sample_total_jumps(k, size, rng)
    i = 1 + np.floor(rng.random(size) * (t - 1)).astype(np.int64)
    i = np.minimum(i, t - 1)
    return i, t - i


def sample_renewal(k: KernelSpec, box: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """One path: all renewal points inside ``[0, N] x [0, M]``, origin first.

    Returns an ``(L, 2)`` integer array, strictly increasing in both columns.
    """
    N, M = box
    pts = [(0, 0)]
    n = m = 0
    while True:
        i, j = sample_jumps(k, 1, rng)
        n += int(i[0])
        m += int(j[0])
        if n > N or m > M:
            break
        pts.append((n, m))
    return np.array(pts, dtype=np.int64)


def _walk(k: KernelSpec, N: int, M: int, n_paths: int, rng: np.random.Generator, visit) -> None:
    """Advance ``n_paths`` independent paths until each leaves the box.

    ``visit(idx, n, m)`` receives the indices and positions of every
    renewal point that lands inside ``[1, N] x [1, M]``.
    """
    pos_n = np.zeros(n_paths, dtype=np.int64)
    pos_m = np.zeros(n_paths, dtype=np.int64)
    idx = np.arange(n_paths)
    while idx.size:
        i, j = sample_jumps(k, idx.size, rng)
        pos_n[idx] += i
        pos_m[idx] += j
        inside = (pos_n[idx] <= N) & (pos_m[idx] <= M)
        idx = idx[inside]
        if idx.size:
            visit(idx, pos_n[idx], pos_m[idx])


def empirical_mass(k: KernelSpec, N: int, M: int, n_paths: int,
                   rng: np.random.Generator):
    """Monte Carlo estimate of ``u`` on the box plus first-jump frequencies.

    Returns
    -------
    u_hat : (N+1, M+1) ndarray
        Fraction of paths visiting each cell (``u_hat[0, 0] = 1``).
    first_jump_11 : float
        Fraction of paths whose first jump is ``(1, 1)``.
    """
    hits = np.zeros((N + 1, M + 1), dtype=np.int64)

    def visit(idx, n, m):
        np.add.at(hits, (n, m), 1)

    # the first jump is drawn here so it is counted even when it leaves the box
    i, j = sample_jumps(k, n_paths, rng)
    n11 = int(np.sum((i == 1) & (j == 1)))
    pos_n, pos_m = i.copy(), j.copy()
    idx = np.nonzero((pos_n <= N) & (pos_m <= M))[0]
    visit(idx, pos_n[idx], pos_m[idx])
    while idx.size:
        a, b = sample_jumps(k, idx.size, rng)
        pos_n[idx] += a
        pos_m[idx] += b
        idx = idx[(pos_n[idx] <= N) & (pos_m[idx] <= M)]
        if idx.size:
            visit(idx, pos_n[idx], pos_m[idx])
    u_hat = hits / n_paths
    u_hat[0, 0] = 1.0
    return u_hat, n11 / n_paths


def contact_counts(k: KernelSpec, N: int, M: int, n_paths: int,
                   rng: np.random.Generator, include_origin: bool = False) -> np.ndarray:
    """``|tau ∩ (0, N] x (0, M]|`` for ``n_paths`` independent paths.

    With ``include_origin`` the origin is counted too, so every count is
    at least 1.
    """
    counts = np.zeros(n_paths, dtype=np.int64)

    def visit(idx, n, m):
        counts[idx] += 1

    _walk(k, N, M, n_paths, rng, visit)
    return counts + (1 if include_origin else 0)


def contact_count_scaling(k: KernelSpec, N_list, gamma: float, n_paths: int,
                          rng: np.random.Generator) -> tuple[ExponentFit, np.ndarray]:
    """Median contact count against ``N`` and its log-log slope.

    Returns the fit and the medians (one per ``N``). Requires ``alpha < 1``.
    """
    if k.alpha >= 1:
        raise ValueError("contact count scaling applies to alpha < 1")
    N_list = np.asarray(N_list, dtype=np.int64)
    med = np.array([
        np.median(contact_counts(k, int(N), int(np.floor(gamma * N)), n_paths, rng))
        for N in N_list
    ])
    return fit_loglog(N_list, med, (int(N_list.min()), int(N_list.max()))), med


# -- k-step law ---------------------------------------------------------------

MAX_STEPS = 64


def k_step_pmf(k: KernelSpec, steps: int, N: int, budget: float | None = None) -> np.ndarray:
    """``P(tau_steps = (n, m))`` for ``0 <= n, m <= N`` by repeated convolution."""
    if not 0 <= steps <= MAX_STEPS:
        raise ValueError(f"steps must lie in [0, {MAX_STEPS}]")
    check_budget(N, N, None if budget is None else budget / max(steps, 1))
    kern = k.values(2 * N)
    p = np.zeros((N + 1, N + 1))
    p[0, 0] = 1.0
    for _ in range(steps):
        p = kernels.rect_convolve(p, kern)
    return p


def local_large_deviation_ratio(k: KernelSpec, steps: int, N: int, C: float = 1.0):
    """Ratio ``P(tau_k = (n, n)) / (k K(n - mu k))`` over ``n - mu k >= C sqrt(k log k)``.

    Returns ``(n_values, ratios)``; only meaningful for ``alpha > 1``.
    """
    if k.alpha <= 1:
        raise ValueError("needs a finite mean (alpha > 1)")
    p = k_step_pmf(k, steps, N)
    mu = k.mu
    n = np.arange(N + 1)
    x = n - mu * steps
    thresh = C * np.sqrt(steps * np.log(max(steps, 2)))
    ok = (x >= max(thresh, 2.0))
    n_ok = n[ok]
    xs = x[ok]
    log_ref = (k.sv.log(xs) - (2 + k.alpha) * np.log(xs) - np.log(k.norm)) + np.log(steps)
    return n_ok, p[n_ok, n_ok] / np.exp(log_ref)


# -- exponent fits ----------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticsProfile:
    """Scaling laws of ``tau`` at the exponent level.

    ``a_n`` grows like ``n**a_exponent`` (up to slowly varying factors);
    ``b_n = mu * n`` for ``alpha > 1`` and 0 otherwise. ``rho`` is only set
    for ``alpha > 1``.
    """

    alpha: float
    a_exponent: float
    b_slope: float
    rho: float | None
    diagonal_fit: ExponentFit | None = None
    offdiagonal_fit: ExponentFit | None = None

    @property
    def diagonal_exponent(self) -> float:
        """Predicted slope of ``log u[n, n]`` against ``log n``."""
        if self.alpha < 1:
            return -(2.0 - self.alpha)
        return -1.0 / min(self.alpha, 2.0)


def asymptotics_profile(k: KernelSpec, diagonal_fit: ExponentFit | None = None,
                        offdiagonal_fit: ExponentFit | None = None) -> AsymptoticsProfile:
    a = k.alpha
    return AsymptoticsProfile(
        alpha=a,
        a_exponent=1.0 / min(a, 2.0),
        b_slope=k.mu if a > 1 else 0.0,
        rho=(1.0 - 1.0 / min(a, 2.0)) if a > 1 else None,
        diagonal_fit=diagonal_fit,
        offdiagonal_fit=offdiagonal_fit,
    )


def fit_diagonal_exponent(grid: RenewalMassGrid, window=(64, 1024)) -> ExponentFit:
    """Slope of ``log u[n, n]`` on the dyadic ``n`` inside ``window``."""
    lo, hi = window
    if hi > min(grid.N, grid.M):
        raise ValueError("window exceeds the grid")
    n = dyadic_points(lo, hi)
    return fit_loglog_logy(n, grid.log_u[n, n], (lo, hi))


def fit_offdiagonal_exponent(grid: RenewalMassGrid, n_fixed: int, r_window) -> ExponentFit:
    """Slope of ``log u[n, n + r]`` against ``log r`` on dyadic ``r``."""
    lo, hi = r_window
    if n_fixed > grid.N or n_fixed + hi > grid.M:
        raise ValueError("offset window exceeds the grid")
    r = dyadic_points(lo, hi)
    return fit_loglog_logy(r, grid.log_u[n_fixed, n_fixed + r], (lo, hi))
