import math

import numpy as np
import pytest

from gpslab.errors import BudgetError
from gpslab.kernel import build_kernel
from gpslab.oracles import naive_renewal_mass
from gpslab.renewal import (contact_count_scaling, contact_counts, empirical_mass,
                            fit_offdiagonal_exponent, k_step_pmf, renewal_mass,
                            sample_jumps, sample_renewal)


@pytest.fixture(scope="module")
def k15():
    return build_kernel(1.5)


def test_hand_values(k15):
    u = renewal_mass(k15, 4, 4).u
    K = k15.values(8)
    assert u[0, 0] == 1.0
    assert u[1, 1] == pytest.approx(K[2], rel=1e-15)
    assert u[2, 2] == pytest.approx(K[4] + K[2] ** 2, rel=1e-14)
    assert u[3, 0] == 0.0 and u[0, 3] == 0.0


@pytest.mark.parametrize("alpha", [0.5, 1.5, 3.0])
def test_dp_matches_naive_convolution(alpha):
    k = build_kernel(alpha)
    u = renewal_mass(k, 20, 27).u
    naive = naive_renewal_mass(k, 20, 27)
    mask = naive > 0
    assert np.array_equal(mask, u > 0)
    assert np.max(np.abs(u[mask] - naive[mask]) / naive[mask]) < 1e-12


def test_budget_error(k15):
    with pytest.raises(BudgetError):
        renewal_mass(k15, 1000, 1000, budget=1e6)


def test_first_jump_frequency(k15):
    rng = np.random.default_rng(1)
    n = 10**6
    i, j = sample_jumps(k15, n, rng)
    p = float(k15.K(2))
    freq = np.mean((i == 1) & (j == 1))
    assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / n)
    assert np.all(i >= 1) and np.all(j >= 1)


def test_sampled_paths_strictly_increasing(k15):
    rng = np.random.default_rng(2)
    for _ in range(50):
        pts = sample_renewal(k15, (200, 300), rng)
        assert tuple(pts[0]) == (0, 0)
        assert np.all(np.diff(pts[:, 0]) > 0) and np.all(np.diff(pts[:, 1]) > 0)
        assert pts[:, 0].max() <= 200 and pts[:, 1].max() <= 300


def test_empirical_visit_frequency(k15):
    rng = np.random.default_rng(3)
    n = 10**6
    u_hat, f11 = empirical_mass(k15, 2, 2, n, rng)
    u22 = renewal_mass(k15, 2, 2).u[2, 2]
    assert abs(u_hat[2, 2] - u22) < 4 * math.sqrt(u22 * (1 - u22) / n)
    p = float(k15.K(2))
    assert abs(f11 - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_k_step_pmf(k15):
    K = k15.values(40)
    p1 = k_step_pmf(k15, 1, 20)
    n, m = np.meshgrid(np.arange(21), np.arange(21), indexing="ij")
    expected = np.where((n >= 1) & (m >= 1), K[n + m], 0.0)
    assert np.allclose(p1, expected, rtol=1e-14, atol=0)
    p2 = k_step_pmf(k15, 2, 20)
    assert p2[2, 2] == pytest.approx(K[2] ** 2, rel=1e-14)
    assert p2.sum() <= 1.0
    with pytest.raises(ValueError):
        k_step_pmf(k15, 65, 4)


def test_k_step_pmfs_sum_to_renewal_mass(k15):
    u = renewal_mass(k15, 12, 12).u
    total = sum(k_step_pmf(k15, s, 12) for s in range(0, 13))
    assert np.allclose(total, u, rtol=1e-12, atol=0)


def test_offdiagonal_decay_alpha_15(k15):
    grid = renewal_mass(k15, 256, 768)
    assert fit_offdiagonal_exponent(grid, 256, (32, 512)).slope <= -2.3


def test_offdiagonal_decay_alpha_05():
    # for alpha < 1 the off-direction decay holds for r >> n
    k = build_kernel(0.5)
    grid = renewal_mass(k, 16, 528)
    assert fit_offdiagonal_exponent(grid, 16, (32, 512)).slope <= -1.3


def test_offdiagonal_window_too_short(k15):
    grid = renewal_mass(k15, 64, 64)
    with pytest.raises(ValueError):
        fit_offdiagonal_exponent(grid, 16, (4, 16))


def test_contact_count_with_origin_at_least_one():
    k = build_kernel(0.5)
    c = contact_counts(k, 64, 64, 500, np.random.default_rng(4), include_origin=True)
    assert np.all(c >= 1)


def test_contact_count_requires_small_alpha(k15):
    with pytest.raises(ValueError):
        contact_count_scaling(k15, [64, 128], 1.0, 10, np.random.default_rng(0))


@pytest.mark.slow
def test_contact_count_scaling_alpha_08():
    k = build_kernel(0.8)
    N_list = [128, 256, 512, 1024, 2048, 4096]
    fit, _ = contact_count_scaling(k, N_list, 1.0, 1000, np.random.default_rng(5))
    assert fit.contains(0.8, 0.1)
