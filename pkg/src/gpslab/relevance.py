"""Disorder relevance diagnostics and the fractional-moment certificate.

The second moment of the normalized partition function at the annealed
critical point is the moment generating function of the overlap of two
independent renewals. The certificate bounds ``A[i, j] = E[(Z^c_{i,j})^delta]``
from above by deterministic DPs and checks that the coarse-grained sum
``rho1 + rho2 + rho3`` is at most 1, which forces zero free energy.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._backend import kernels
from .disorder import DisorderSpec
from .errors import ConfigError, RangeError
from .fitting import ExponentFit, fit_loglog
from .intersection import IntersectionTables, overlap_mgf_curve, sigma_termination_report
from .kernel import KernelSpec, TailSumTable, build_tail_sums
from .polymer import ModelParams, _map_ordered, constrained_partition, rectangle_partition

log = logging.getLogger(__name__)

_EPS = np.finfo(np.float64).eps
_EPS_LD = float(np.finfo(np.longdouble).eps)
# relative error allowance for a DP value fed into the certificate
DP_REL_ERR = 1e-11
DEFAULT_EPSILON = 0.5


# -- second moment ---------------------------------------------------------------

def second_moment_lambda(spec: DisorderSpec, beta: float) -> float:
    """``log Q(2 beta) - 2 log Q(beta)``."""
    return float(spec.log_Q(2.0 * beta) - 2.0 * spec.log_Q(beta))


def second_moment_curve(t: IntersectionTables, spec: DisorderSpec, beta: float,
                        N_list, gamma: float = 1.0) -> np.ndarray:
    """``E[(Z^f)^2] / E[Z^f]^2`` at the annealed critical point, per ``N``.

    Exact: the overlap mgf at ``lambda = log Q(2 beta) - 2 log Q(beta)``.
    Entries whose value leaves double range are ``inf``; since the curve is
    non-decreasing in ``N``, every later entry is ``inf`` too.
    """
    lam = second_moment_lambda(spec, beta)
    N_list = np.asarray(N_list, dtype=np.int64)
    if len(N_list) == 0:
        return np.empty(0)
    if np.any(np.diff(N_list) <= 0):
        raise ValueError("N_list must be strictly increasing")
    return _curve_or_inf(t, lam, N_list, gamma)


def _curve_or_inf(t: IntersectionTables, lam: float, N_list: np.ndarray,
                  gamma: float) -> np.ndarray:
    # one chain grid for the whole list; if the expansion itself overflows, bisect
    try:
        out = np.asarray(overlap_mgf_curve(t, lam, N_list, gamma), dtype=float)
    except RangeError:
        if len(N_list) == 1:
            return np.array([np.inf])
        mid = len(N_list) // 2
        left = _curve_or_inf(t, lam, N_list[:mid], gamma)
        if not np.isfinite(left[-1]):
            return np.concatenate([left, np.full(len(N_list) - mid, np.inf)])
        return np.concatenate([left, _curve_or_inf(t, lam, N_list[mid:], gamma)])
    bad = np.nonzero(~np.isfinite(out))[0]
    if len(bad):
        out[bad[0]:] = np.inf
    return out


@dataclass(frozen=True)
class Beta1Bracket:
    lo: float
    hi: float
    P_sigma1_finite: tuple[float, float]


def _invert_excess(spec: DisorderSpec, target: float) -> float:
    """Smallest ``beta >= 0`` with ``log Q(2b) - 2 log Q(b) >= target`` (``inf`` if none)."""
    if target <= 0:
        return 0.0
    f = lambda b: second_moment_lambda(spec, b) - target
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            return math.inf
    return float(optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-14))


def compute_beta1(k: KernelSpec, spec: DisorderSpec, t: IntersectionTables,
                  max_rel_width: float = 0.05) -> Beta1Bracket:
    """Bracket on the largest ``beta`` with a bounded second moment.

    Solves ``log Q(2 beta) - 2 log Q(beta) = -log P(sigma_1 < inf)`` at both
    ends of the probability bracket. Zero when ``sigma`` is persistent.

    Raises
    ------
    InconclusiveError
        When the termination bracket is too wide.
    """
    rep = sigma_termination_report(t, k, max_rel_width)
    if rep.persistent:
        return Beta1Bracket(0.0, 0.0, rep.P_sigma1_finite)
    p_lo, p_hi = rep.P_sigma1_finite
    lo = _invert_excess(spec, -math.log(p_hi))
    hi = _invert_excess(spec, -math.log(p_lo))
    return Beta1Bracket(lo, hi, (p_lo, p_hi))


@dataclass(frozen=True)
class NBetaResult:
    """Largest grid ``N`` with second moment at most 2."""

    beta: float
    N_beta: int
    exhausted: bool  # True when the whole grid stays below 2 (lower bound only)


def compute_N_beta(t: IntersectionTables, spec: DisorderSpec, beta: float,
                   gamma: float = 1.0, N_grid=None) -> NBetaResult:
    """Correlation volume from the second-moment curve on ``N_grid``.

    The default grid is every ``N`` up to the table size.
    """
    if N_grid is None:
        N_grid = np.arange(1, min(t.N, int(t.M / gamma)) + 1)
    N_grid = np.asarray(N_grid, dtype=np.int64)
    curve = second_moment_curve(t, spec, beta, N_grid, gamma)
    below = np.nonzero(curve <= 2.0)[0]
    if len(below) == len(N_grid):
        return NBetaResult(beta, int(N_grid[-1]), True)
    first_above = int(np.argmax(curve > 2.0))
    nb = int(N_grid[first_above - 1]) if first_above > 0 else 0
    return NBetaResult(beta, nb, False)


def N_beta_scaling(t: IntersectionTables, spec: DisorderSpec, betas, gamma: float = 1.0,
                   N_grid=None) -> tuple[list[NBetaResult], ExponentFit | None, float]:
    """``N_beta`` on a list of ``beta`` and the slope of ``log N_beta`` vs ``log(1/beta)``.

    Returns the results, the fit (``None`` with fewer than 3 usable points)
    and the predicted exponent ``max(2 alpha / (alpha - 1), 4)``.
    """
    res = [compute_N_beta(t, spec, float(b), gamma, N_grid) for b in betas]
    a = t.kernel.alpha
    target = max(2 * a / (a - 1), 4.0) if a > 1 else math.nan
    ok = [r for r in res if not r.exhausted and r.N_beta > 0]
    fit = None
    if len(ok) >= 3:
        fit = fit_loglog(np.array([1.0 / r.beta for r in ok]),
                         np.array([r.N_beta for r in ok], dtype=float), min_points=3)
    return res, fit, target


# -- fractional moment bounds ---------------------------------------------------

def _log_pinned(k: KernelSpec, logw: np.ndarray) -> np.ndarray:
    km, ke = k.scaled_values(logw.shape[0] + logw.shape[1] - 2)
    mant, dexp = kernels.pinned_dp(km, ke, np.ascontiguousarray(logw))
    d = np.add.outer(np.arange(logw.shape[0]), np.arange(logw.shape[1]))
    with np.errstate(divide="ignore"):
        return np.log(mant) + dexp[d] * math.log(2.0)


def jensen_log_bound_grid(k: KernelSpec, params: ModelParams, spec: DisorderSpec,
                          n: int, m: int, delta: float) -> np.ndarray:
    """``delta * log E Z^c[i, j]`` for all ``i <= n``, ``j <= m`` (one DP)."""
    logw = np.full((n + 1, m + 1), params.h + spec.log_Q(params.beta))
    return delta * _log_pinned(k, logw)


def frac_moment_jensen_bound(k: KernelSpec, params: ModelParams, spec: DisorderSpec,
                             i: int, j: int, delta: float) -> tuple[float, float]:
    """``(E Z_{i,j})^delta`` and the coarser ``e^delta u[i, j]^delta``.

    ``E Z`` is the homogeneous partition function at ``h + log Q(beta)``.
    """
    jb = jensen_log_bound_grid(k, params, spec, i, j, delta)[i, j]
    lu = _log_pinned(k, np.zeros((i + 1, j + 1)))[i, j]
    return float(np.exp(jb)), float(np.exp(delta * (1.0 + lu)))


def tilt_penalty(spec: DisorderSpec, lam: float, delta: float) -> float:
    """Log of the Hoelder cost per tilted site, ``delta log Q(-lam) + (1-delta) log Q(lam delta/(1-delta))``."""
    return float(delta * spec.log_Q(-lam) + (1.0 - delta) * spec.log_Q(lam * delta / (1.0 - delta)))


def strip_mask(n: int, m: int, ell: float) -> np.ndarray:
    """Sites ``(a, b)`` with ``1 <= a <= n``, ``1 <= b <= m``, ``|a - b| <= 2 ell``.

    Axis sites carry no disorder, so they are never tilted.
    """
    a = np.arange(n + 1)[:, None]
    b = np.arange(m + 1)[None, :]
    mask = np.abs(a - b) <= 2.0 * ell
    mask[0, :] = False
    mask[:, 0] = False
    return mask


def _check_lambda(lam: float, delta: float) -> None:
    if abs(lam) > min(1.0, (1.0 - delta) / delta) + 1e-15:
        raise ValueError(f"|lambda|={lam:g} exceeds min(1, (1-delta)/delta)")


def tilt_log_bound_grid(k: KernelSpec, params: ModelParams, spec: DisorderSpec,
                        n: int, m: int, delta: float, lam: float, ell: float) -> np.ndarray:
    """Log of the change-of-measure bound for every ``(i, j) <= (n, m)`` at fixed ``(lam, ell)``.

    ``delta * log E_tilt[Z_{i,j}] + #J_{i,j} * penalty`` where ``#J_{i,j}``
    counts strip sites in ``[1, i] x [1, j]``. The tilted expectation uses
    site weight ``e^h Q(beta - lam) / Q(-lam)`` in the strip and
    ``e^h Q(beta)`` elsewhere.
    """
    _check_lambda(lam, delta)
    mask = strip_mask(n, m, ell)
    b = params.beta
    w_in = params.h + spec.log_Q(b - lam) - spec.log_Q(-lam)
    w_out = params.h + spec.log_Q(b)
    logw = np.where(mask, w_in, w_out)
    count = mask.astype(np.int64).cumsum(0).cumsum(1)
    return delta * _log_pinned(k, logw) + count * tilt_penalty(spec, lam, delta)


def frac_moment_tilt_bound(k: KernelSpec, params: ModelParams, spec: DisorderSpec,
                           i: int, j: int, delta: float, lam: float, ell: float) -> float:
    """Change-of-measure upper bound on ``E[(Z_{i,j})^delta]``.

    Raises
    ------
    ValueError
        When ``|lam| > min(1, (1 - delta) / delta)``.
    """
    return float(np.exp(tilt_log_bound_grid(k, params, spec, i, j, delta, lam, ell)[i, j]))


def small_box_partitions(k: KernelSpec, logw: np.ndarray) -> np.ndarray:
    """Batched ``Z^c`` for many small weight grids, shape ``(R, n+1, m+1)``.

    Direct summation over all predecessors; meant for boxes up to a few
    dozen sites per side.
    """
    R, n1, m1 = logw.shape
    Kt = k.values(n1 + m1)
    Z = np.zeros((R, n1, m1))
    Z[:, 0, 0] = 1.0
    w = np.exp(logw)
    for n in range(1, n1):
        for m in range(1, m1):
            kk = Kt[(n - np.arange(n))[:, None] + (m - np.arange(m))[None, :]]
            Z[:, n, m] = w[:, n, m] * np.einsum("rab,ab->r", Z[:, :n, :m], kk)
    return Z


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_err: float
    replicas: int


def frac_moment_mc(k: KernelSpec, params: ModelParams, spec: DisorderSpec, i: int, j: int,
                   delta: float, replicas: int, replica_offset: int = 0) -> MCEstimate:
    """Monte Carlo ``E[(Z_{i,j})^delta]`` over replicas ``0..replicas-1``.

    Each replica's ``Z`` is exact. Used only to spot-check the bounds.
    """
    idx = range(replica_offset, replica_offset + replicas)
    if params.beta == 0.0:
        pg = constrained_partition(k, params, None, i, j)
        v = float(pg.value(i, j)) ** delta
        return MCEstimate(v, 0.0, replicas)
    if i <= 16 and j <= 16:
        om = np.stack([spec.field(r).grid(i, j) for r in idx])
        Z = small_box_partitions(k, params.beta * om + params.h)[:, i, j]
    else:
        Z = np.array([float(constrained_partition(k, params, spec.field(r), i, j).value(i, j))
                      for r in idx])
    x = Z**delta
    se = float(np.std(x, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return MCEstimate(float(np.mean(x)), se, replicas)


# -- coarse-grained sums ---------------------------------------------------------

def _range_sums_upper(T: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Upper bounds on ``sum_{s=a}^{b} T[s]`` (zero when ``a > b``).

    Longdouble prefix sums; the rounding of each prefix is at most
    ``len * eps * total``, so twice that is added to every difference.
    """
    C = np.concatenate([[0.0], np.cumsum(T.astype(np.longdouble))])
    slack = 2.0 * len(T) * _EPS_LD * float(C[-1])
    a = np.asarray(a)
    b = np.asarray(b)
    out = (C[np.maximum(b + 1, a)] - C[a]).astype(np.float64)
    return np.where(b >= a, out + slack, 0.0)


def _upward_total(x: np.ndarray) -> float:
    """Sum of nonnegative terms with the inflation ``(1 + n eps)``."""
    n = x.size
    return float(np.sum(x, dtype=np.float64)) * (1.0 + (n + 2) * _EPS)


def _rho2_core(A: np.ndarray, ks: int, T1: np.ndarray) -> float:
    # sum_{n=1}^{k-1} sum_{i<n} sum_{j<k} A[i,j] T1[n-i+k-j]
    #   = sum_{i,j} A[i,j] sum_{s=k-j+1}^{2k-1-i-j} T1[s]
    i = np.arange(ks)[:, None]
    j = np.arange(ks)[None, :]
    lo = ks - j + 1 + 0 * i
    hi = 2 * ks - 1 - i - j
    S = _range_sums_upper(T1, lo, hi)
    return _upward_total(A * S)


def rho_terms(A_upper: np.ndarray, k_scale: int, delta: float, tails: TailSumTable,
              Ez_delta: float) -> tuple[float, float, float]:
    """Upper bounds on the three coarse-grained sums.

    Parameters
    ----------
    A_upper : (k, k) array
        Upper bounds on ``A[i, j]`` for ``0 <= i, j < k``; ``A[0, 0] = 1`` and
        the rest of the axes zero.
    k_scale : int
    delta : float
    tails : TailSumTable
        Built for the same ``delta`` with ``s_max >= 2 k``.
    Ez_delta : float
        ``E[z^delta] = e^{delta h} Q(delta beta)``.
    """
    ks = int(k_scale)
    A = np.asarray(A_upper, dtype=np.float64)
    if A.shape != (ks, ks):
        raise ValueError("A_upper must be k x k")
    if tails.s_max < 2 * ks:
        raise ValueError("tail table too short")
    if abs(tails.delta - delta) > 0:
        raise ValueError("tail table built for another delta")
    i = np.arange(ks)[:, None]
    j = np.arange(ks)[None, :]
    r1 = _upward_total(A * tails.T2[2 * ks - i - j])
    r2 = _rho2_core(A, ks, tails.T1)
    r3 = _rho2_core(A.T, ks, tails.T1)
    inflate = 1.0 + 4 * _EPS
    return (Ez_delta * r1 * inflate, Ez_delta * r2 * inflate, Ez_delta * r3 * inflate)


def log_Ez_delta(spec: DisorderSpec, beta: float, h: float, delta: float) -> float:
    """``log E[z^delta] = delta h + log Q(delta beta)``."""
    return float(delta * h + spec.log_Q(delta * beta))


# -- decomposition identity ------------------------------------------------------

@dataclass(frozen=True)
class DecompositionResult:
    ok: bool
    rel_err: float
    direct: float
    parts: tuple[float, float, float]


def decomposition_identity_check(k: KernelSpec, params: ModelParams, fld, N: int, M: int,
                                 k_scale: int, rtol: float = 1e-10) -> DecompositionResult:
    """Split ``Z^c_{N,M}`` by the last site outside the ``k x k`` corner block.

    The three parts sum over the last renewal before the corner block (in
    the lower-left rectangle, the right strip or the top strip) and the first
    one inside it; their total must equal the direct DP value.
    """
    ks = int(k_scale)
    if ks < 1 or ks > min(N, M):
        raise ValueError("k_scale must lie in [1, min(N, M)]")
    pg = constrained_partition(k, params, fld, N, M)
    Zc = pg.grid.to_float()
    direct = float(Zc[N, M])
    K = k.values(N + M + 1)
    if fld is not None and params.beta != 0:
        om = fld.grid(N, M)
    else:
        om = np.zeros((N + 1, M + 1))
    z = np.exp(params.beta * om + params.h)
    # tail block factors: z_{N-i,M-j} * Z_{(N-i,M-j),(N,M)}
    tailf = np.zeros((ks, ks))
    for i in range(ks):
        for j in range(ks):
            r = rectangle_partition(k, params, fld, (N - i, M - j), (N, M))
            tailf[i, j] = z[N - i, M - j] * r if (N - i >= 1 and M - j >= 1) else 0.0

    def part(n_rng, m_rng, i_lim, j_lim) -> float:
        tot = 0.0
        for n in n_rng:
            for m in m_rng:
                zc = Zc[N - n, M - m]
                if zc == 0.0:
                    continue
                for i in range(i_lim(n)):
                    for j in range(j_lim(m)):
                        tot += zc * K[n - i + m - j] * tailf[i, j]
        return tot

    z1 = part(range(ks, N + 1), range(ks, M + 1), lambda n: ks, lambda m: ks)
    z2 = part(range(1, ks), range(ks, M + 1), lambda n: n, lambda m: ks)
    z3 = part(range(ks, N + 1), range(1, ks), lambda n: ks, lambda m: m)
    tot = z1 + z2 + z3
    rel = abs(tot - direct) / direct
    return DecompositionResult(bool(rel < rtol), float(rel), direct, (z1, z2, z3))


# -- certificate -------------------------------------------------------------------

def rule_scale(alpha: float, beta: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Coarse-graining scale ``k = 1 / Delta`` as a function of ``beta``.

    ``beta**(-(1+eps) 2 alpha/(alpha-1))`` for ``1 < alpha <= 2`` and
    ``beta**-4 |log beta|**6`` for ``alpha > 2``.
    """
    if alpha <= 1:
        raise ValueError("scale rule needs alpha > 1")
    if alpha <= 2:
        return beta ** (-(1 + epsilon) * 2 * alpha / (alpha - 1))
    return beta**-4 * abs(math.log(beta)) ** 6


def rule_strip_width(alpha: float, i: int, epsilon: float = DEFAULT_EPSILON,
                      C: float = 1.0) -> float:
    """Strip half-width ``i**((1+eps**3)/alpha)`` (``alpha <= 2``) or ``C sqrt(i log i)``."""
    if alpha <= 2:
        return float(i ** ((1 + epsilon**3) / alpha))
    return float(C * math.sqrt(i * math.log(max(i, 2))))


@dataclass(frozen=True)
class TiltCandidate:
    lam: float
    ell: float
    tag: str


def tilt_schedule(alpha: float, k_scale: int, delta: float,
                  epsilon: float = DEFAULT_EPSILON, n_grid: int = 8) -> list[TiltCandidate]:
    """Candidate ``(lambda, ell)`` pairs, each evaluated by one DP on the whole block.

    Widths: the default rule, ``sqrt(i)`` and ``i`` at dyadic ``i`` in
    ``[sqrt(k), k]``. For each width the rule ``lambda = (i ell)**-1/2``
    and ``n_grid`` log-spaced values up to the admissible maximum.
    """
    lam_max = min(1.0, (1.0 - delta) / delta)
    i_list = sorted({int(2**e) for e in range(int(math.log2(max(k_scale, 1))) + 1)
                     if 2**e >= math.sqrt(k_scale) and 2**e <= k_scale} | {max(k_scale - 1, 1)})
    seen = set()
    out: list[TiltCandidate] = []
    grid = lam_max * np.logspace(-3, 0, n_grid)
    for i in i_list:
        for ell, kind in ((rule_strip_width(alpha, i, epsilon), "rule"),
                          (math.sqrt(i), "sqrt"), (float(i), "linear")):
            ell_key = int(math.floor(2 * ell))  # the mask only depends on floor(2 ell)
            lam_p = min((i * max(ell, 1.0)) ** -0.5, lam_max)
            for lam, lt in [(lam_p, "rule")] + [(float(x), "grid") for x in grid]:
                key = (ell_key, round(lam, 15))
                if key in seen:
                    continue
                seen.add(key)
                out.append(TiltCandidate(float(lam), ell_key / 2.0, f"{kind}-{lt}"))
    return out


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of the fractional-moment delocalization certificate."""

    alpha: float
    beta: float
    h: float
    delta: float
    k: int
    Delta: float
    rho1: float
    rho2: float
    rho3: float
    certified: bool
    shift_lower_bound: float | None
    strong_delta_condition: bool | None
    A_upper: np.ndarray = field(repr=False)
    which_bound: np.ndarray = field(repr=False)

    @property
    def rho_sum(self) -> float:
        return self.rho1 + self.rho2 + self.rho3

    def bound_histogram(self) -> dict[str, int]:
        c = Counter(self.which_bound[1:, 1:].ravel().tolist())
        return dict(sorted(c.items()))

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta, "h": self.h, "delta": self.delta,
            "k": self.k, "Delta": self.Delta, "rho1": self.rho1, "rho2": self.rho2,
            "rho3": self.rho3, "rho_sum": self.rho_sum, "certified": self.certified,
            "strong_delta_condition": self.strong_delta_condition, "shift_lower_bound": self.shift_lower_bound,
            "per_cell_bound_source": self.bound_histogram(),
        }


def fractional_moment_upper_grid(k: KernelSpec, params: ModelParams, spec: DisorderSpec,
                                 k_scale: int, delta: float,
                                 schedule: list[TiltCandidate] | None = None,
                                 use_tilt: bool = True,
                                 threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``A_upper`` on ``[0, k) x [0, k)`` and the source tag of each cell.

    The cellwise minimum of the Jensen bound and every tilt candidate,
    inflated by :data:`DP_REL_ERR`.
    """
    n = k_scale - 1
    best = jensen_log_bound_grid(k, params, spec, n, n, delta)
    tag = np.full(best.shape, "jensen", dtype=object)
    if use_tilt and params.beta > 0 and n >= 1:
        if schedule is None:
            schedule = tilt_schedule(k.alpha, k_scale, delta)

        def one(c: TiltCandidate) -> np.ndarray:
            return tilt_log_bound_grid(k, params, spec, n, n, delta, c.lam, c.ell)

        grids = _map_ordered(one, schedule, threads)
        for c, g in zip(schedule, grids):
            better = g < best
            best = np.where(better, g, best)
            tag[better] = "holder_tilt"
    A = np.exp(best) * (1.0 + DP_REL_ERR)
    A[0, 0] = 1.0
    A[1:, 0] = 0.0
    A[0, 1:] = 0.0
    tag[0, :] = "axis"
    tag[:, 0] = "axis"
    return A, tag


def deloc_certificate(k: KernelSpec, spec: DisorderSpec, beta: float, h: float,
                      delta: float, k_scale: int, gamma=1,
                      schedule: list[TiltCandidate] | None = None, use_tilt: bool = True,
                      threads: int | None = None) -> CertificateReport:
    """Fractional-moment certificate that the free energy vanishes at ``(beta, h)``.

    Raises
    ------
    ConfigError
        When ``Delta = h - h_c^a(beta) <= 0``, ``Delta * k > 1`` or ``delta``
        is not admissible.
    """
    lq = spec.log_Q(beta)
    Delta = h + lq
    if not Delta > 0:
        raise ConfigError("h must exceed the annealed critical point")
    if Delta * k_scale > 1.0 + 1e-12:
        raise ConfigError(f"Delta * k = {Delta * k_scale:.4g} exceeds 1")
    if not (0.0 < delta < 1.0):
        raise ConfigError("delta must lie in (0, 1)")
    if (2.0 + k.alpha) * delta <= 2.0:
        raise ConfigError("(2 + alpha) * delta must exceed 2")
    strong = (2.0 + k.alpha) * delta > 4.0 if k.alpha > 2 else None
    params = ModelParams(beta, h, gamma)
    A, tag = fractional_moment_upper_grid(k, params, spec, k_scale, delta, schedule, use_tilt, threads)
    tails = build_tail_sums(k, delta, 2 * k_scale)
    ez = math.exp(log_Ez_delta(spec, beta, h, delta)) * (1.0 + 4 * _EPS)
    r1, r2, r3 = rho_terms(A, k_scale, delta, tails, ez)
    cert = (r1 + r2 + r3) * (1.0 + 4 * _EPS) <= 1.0
    return CertificateReport(k.alpha, beta, h, delta, int(k_scale), Delta, r1, r2, r3,
                             bool(cert), Delta if cert else None, strong, A, tag)


@dataclass(frozen=True)
class ScanPoint:
    beta: float
    best: CertificateReport
    tried: int


def certificate_scan(k: KernelSpec, spec: DisorderSpec, betas, deltas, k_max: int = 512,
                     epsilon: float = DEFAULT_EPSILON, k_list=None,
                     threads: int | None = None) -> list[ScanPoint]:
    """Minimal rho-sum per ``beta`` over ``delta`` and coarse-graining scales.

    Each scale ``k`` uses the gap ``Delta = 1 / k``. The default scales are
    the rule ``k = 1 / Delta(beta)`` capped at ``k_max``.
    """
    out = []
    for b in betas:
        if k_list is None:
            ks = [max(1, min(k_max, int(round(rule_scale(k.alpha, b, epsilon)))))]
        else:
            ks = [int(x) for x in k_list if x <= k_max]
        best = None
        tried = 0
        for ksc in ks:
            for d in deltas:
                if (2.0 + k.alpha) * d <= 2.0:
                    continue
                h = -spec.log_Q(b) + 1.0 / ksc
                rep = deloc_certificate(k, spec, b, h, d, ksc, threads=threads)
                tried += 1
                if best is None or rep.rho_sum < best.rho_sum:
                    best = rep
        if best is None:
            raise ConfigError("no admissible delta in the scan")
        out.append(ScanPoint(float(b), best, tried))
    return out
