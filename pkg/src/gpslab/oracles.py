"""Brute-force reference computations.

Deliberately direct implementations (quadratic loops, full enumeration,
path simulation) that the fast routines are checked against. Only for small
sizes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernel import KernelSpec
from .polymer import ModelParams
from .renewal import sample_jumps


def naive_partition(k: KernelSpec, logw: np.ndarray) -> np.ndarray:
    """``Z[n, m] = w[n, m] sum_{a<n, b<m} Z[a, b] K(n-a+m-b)`` by direct O(N^2 M^2) summation."""
    n1, m1 = logw.shape
    K = k.values(n1 + m1)
    Z = np.zeros((n1, m1))
    Z[0, 0] = 1.0
    for n in range(1, n1):
        for m in range(1, m1):
            acc = 0.0
            for a in range(n):
                acc += float(np.dot(Z[a, :m], K[n - a + m - np.arange(m)]))
            Z[n, m] = math.exp(logw[n, m]) * acc
    return Z


def naive_renewal_mass(k: KernelSpec, N: int, M: int) -> np.ndarray:
    """``u[n, m] = sum_{i,j >= 1} K(i + j) u[n - i, m - j]`` by direct summation."""
    return naive_partition(k, np.zeros((N + 1, M + 1)))


def _batched_Z(k: KernelSpec, logw: np.ndarray) -> np.ndarray:
    R, n1, m1 = logw.shape
    K = k.values(n1 + m1)
    Z = np.zeros((R, n1, m1))
    Z[:, 0, 0] = 1.0
    w = np.exp(logw)
    for n in range(1, n1):
        for m in range(1, m1):
            acc = np.zeros(R)
            for a in range(n):
                for b in range(m):
                    acc += Z[:, a, b] * K[n - a + m - b]
            Z[:, n, m] = w[:, n, m] * acc
    return Z


def exhaustive_binary_frac_moment(k: KernelSpec, params: ModelParams, i: int, j: int,
                                  delta: float) -> float:
    """Exact ``E[(Z_{i,j})^delta]`` for +-1 disorder by enumerating all ``2**(i j)`` fields."""
    if i == 0 and j == 0:
        return 1.0
    if i == 0 or j == 0:
        return 0.0
    cells = i * j
    if cells > 16:
        raise ValueError("enumeration limited to 16 sites")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=cells)))
    om = np.zeros((len(signs), i + 1, j + 1))
    om[:, 1:, 1:] = signs.reshape(-1, i, j)
    Z = _batched_Z(k, params.beta * om + params.h)[:, i, j]
    return float(np.mean(Z**delta))


def brute_force_rho(A: np.ndarray, k: KernelSpec, delta: float, Ez_delta: float,
                    t_trunc: int) -> tuple[float, float, float]:
    """The three coarse-grained sums written as literal quadruple sums,
    keeping only jumps ``n - i + m - j <= t_trunc``."""
    ks = A.shape[0]
    Kd = np.zeros(t_trunc + 1)
    Kd[2:] = np.exp(delta * k.log_K(np.arange(2, t_trunc + 1)))
    r1 = r2 = r3 = 0.0
    for i in range(ks):
        for j in range(ks):
            if A[i, j] == 0.0:
                continue
            # rho1: n, m >= k
            for n in range(ks, t_trunc + i + 1):
                mmax = t_trunc - (n - i) + j
                if mmax < ks:
                    break
                m = np.arange(ks, mmax + 1)
                r1 += A[i, j] * math.fsum(Kd[n - i + m - j])
            # rho2: i < n < k, m >= k
            for n in range(i + 1, ks):
                mmax = t_trunc - (n - i) + j
                if mmax >= ks:
                    m = np.arange(ks, mmax + 1)
                    r2 += A[i, j] * math.fsum(Kd[n - i + m - j])
            # rho3: j < m < k, n >= k
            for m in range(j + 1, ks):
                nmax = t_trunc - (m - j) + i
                if nmax >= ks:
                    n = np.arange(ks, nmax + 1)
                    r3 += A[i, j] * math.fsum(Kd[n - i + m - j])
    return Ez_delta * r1, Ez_delta * r2, Ez_delta * r3


def _visit_grids(k: KernelSpec, N: int, M: int, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    hits = np.zeros((n_paths, N + 1, M + 1), dtype=bool)
    pos_n = np.zeros(n_paths, dtype=np.int64)
    pos_m = np.zeros(n_paths, dtype=np.int64)
    idx = np.arange(n_paths)
    while idx.size:
        a, b = sample_jumps(k, idx.size, rng)
        pos_n[idx] += a
        pos_m[idx] += b
        idx = idx[(pos_n[idx] <= N) & (pos_m[idx] <= M)]
        hits[idx, pos_n[idx], pos_m[idx]] = True
    return hits


def mc_overlap_mgf(k: KernelSpec, lam: float, N: int, M: int, n_pairs: int,
                   rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo ``E[exp(lam |tau ∩ tau' ∩ (0,N] x (0,M]|)]`` with its standard error."""
    h1 = _visit_grids(k, N, M, n_pairs, rng)
    h2 = _visit_grids(k, N, M, n_pairs, rng)
    H = np.sum(h1 & h2, axis=(1, 2))
    x = np.exp(lam * H)
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n_pairs))


# -- suite ----------------------------------------------------------------------

@dataclass(frozen=True)
class OracleResult:
    name: str
    value: float
    tolerance: float
    passed: bool


def run_oracle_suite(k: KernelSpec, seed: int = 0, N: int = 24) -> list[OracleResult]:
    """Every brute-force cross-check at a small size, for the given kernel."""
    from .disorder import DisorderSpec
    from .intersection import intersection_tables, overlap_mgf
    from .kernel import build_tail_sums
    from .polymer import constrained_partition, free_partition
    from .relevance import (decomposition_identity_check, frac_moment_jensen_bound,
                            frac_moment_tilt_bound, rho_terms)
    from .renewal import renewal_mass

    out: list[OracleResult] = []

    def add(name: str, value: float, tol: float, ok: bool | None = None) -> None:
        out.append(OracleResult(name, float(value), tol, bool(value <= tol if ok is None else ok)))

    grid = renewal_mass(k, N, N)
    naive = naive_renewal_mass(k, N, N)
    u = grid.u
    mask = naive > 0
    add("renewal_dp_vs_naive_rel", np.max(np.abs(u[mask] - naive[mask]) / naive[mask]), 1e-12)
    pg = constrained_partition(k, ModelParams(), None, N, N)
    add("free_partition_mass_abs", abs(math.exp(free_partition(pg)) - 1.0), 1e-9)
    t = intersection_tables(grid, q_box=N)
    add("intersection_reconstruction_rel", t.reconstruction_error(), 1e-12)
    lam = 0.1
    hand = 1.0 + math.expm1(lam) * k.K(2) ** 2
    add("overlap_mgf_hand_rel", abs(overlap_mgf(t, lam, 1, 1) - hand) / hand, 1e-14)
    gs = DisorderSpec("gaussian_unit", seed)
    dec = decomposition_identity_check(k, ModelParams(0.5, 0.0), gs.field(0), N, N, 8)
    add("decomposition_rel", dec.rel_err, 1e-10)
    delta = 0.9 if (2 + k.alpha) * 0.9 > 2 else 0.99
    ks = 4
    tails = build_tail_sums(k, delta, 2 * ks, truncate_at=500)
    A = np.random.default_rng(seed).random((ks, ks))
    g = rho_terms(A, ks, delta, tails, 1.0)
    b = brute_force_rho(A, k, delta, 1.0, 500)
    add("rho_grouping_rel", max(abs(x - y) / y for x, y in zip(g, b)), 1e-10)
    rs = DisorderSpec("rademacher_unit", seed)
    p = ModelParams(0.8, -0.3)
    worst = math.inf
    for i in range(1, 4):
        for j in range(1, 4):
            ex = exhaustive_binary_frac_moment(k, p, i, j, 0.7)
            jb, _ = frac_moment_jensen_bound(k, p, rs, i, j, 0.7)
            tb = frac_moment_tilt_bound(k, p, rs, i, j, 0.7, 0.1, 1)
            worst = min(worst, jb - ex, tb - ex)
    add("frac_moment_bound_margin_min", worst, 0.0, worst >= 0.0)
    return out
