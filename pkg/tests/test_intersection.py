import math

import numpy as np
import pytest

from gpslab.errors import InconclusiveError
from gpslab.intersection import (chain_weights, fit_U_exponent, intersection_tables, invert_1d,
                                 overlap_mgf, overlap_mgf_curve, overlap_mgf_exact,
                                 sigma_termination_report, tail_constant_target)
from gpslab.kernel import build_kernel
from gpslab.oracles import mc_overlap_mgf
from gpslab.renewal import renewal_mass


@pytest.fixture(scope="module")
def k15():
    return build_kernel(1.5)


@pytest.fixture(scope="module")
def t15(k15):
    return intersection_tables(renewal_mass(k15, 256, 256))


def test_q_hand_values(k15, t15):
    K = k15.values(8)
    assert t15.q[1, 1] == pytest.approx(K[2] ** 2, rel=1e-14)
    assert t15.q[2, 2] == pytest.approx((K[4] + K[2] ** 2) ** 2 - K[2] ** 4, rel=1e-13)
    assert t15.q[0, 0] == 0.0 and t15.q[3, 0] == 0.0
    assert t15.tail[2] == pytest.approx(1.0 - t15.q[1, 1], rel=1e-15)


def test_q_is_subprobability(t15):
    assert np.all(t15.q >= 0)
    assert t15.q.sum() <= 1.0


def test_reconstruction(t15):
    assert t15.reconstruction_error() < 1e-12


def test_invert_1d_roundtrip():
    rng = np.random.default_rng(0)
    f = np.zeros(30)
    f[1:] = rng.random(29) * 0.03
    ubar = np.zeros(30)
    ubar[0] = 1.0
    for s in range(1, 30):
        ubar[s] = np.dot(f[1 : s + 1], ubar[s - 1 :: -1][:s])
    assert np.allclose(invert_1d(ubar), f, rtol=1e-12, atol=1e-17)


def test_overlap_mgf_hand_value(k15, t15):
    lam = 0.1
    hand = 1.0 + math.expm1(lam) * float(k15.K(2)) ** 2
    assert overlap_mgf(t15, lam, 1, 1) == pytest.approx(hand, rel=1e-14)
    assert overlap_mgf(t15, lam, 1, 1, method="chain") == pytest.approx(hand, rel=1e-14)


def test_overlap_mgf_lambda_zero(t15):
    assert overlap_mgf(t15, 0.0, 40, 60) == 1.0


def test_overlap_mgf_routes_agree(t15):
    for lam in (-0.3, 0.05, 0.7, 3.0):
        for N, M in ((10, 10), (37, 90), (128, 128)):
            a = overlap_mgf_exact(t15, lam, N, M)
            b = overlap_mgf(t15, lam, N, M, method="chain")
            assert b == pytest.approx(a, rel=1e-10)


def test_overlap_curve_large_values_stay_accurate():
    # values far above 1 must not spoil small-N entries of the same curve
    k = build_kernel(3.0)
    t = intersection_tables(renewal_mass(k, 200, 200))
    N = np.array([1, 7, 30, 100, 200])
    curve = overlap_mgf_curve(t, 2.25, N)
    for n, c in zip(N, curve):
        assert c == pytest.approx(overlap_mgf(t, 2.25, int(n), int(n)), rel=1e-10)
    assert curve[-1] > 1e100


def test_overlap_curve_nondecreasing(t15):
    c = overlap_mgf_curve(t15, 0.2, np.arange(1, 257))
    assert np.all(np.diff(c) >= -1e-12 * c[1:])


def test_chain_weights_nonnegative(t15):
    W = chain_weights(t15, 0.5, 60, 60)
    assert np.all(W >= 0)
    assert W.sum() == pytest.approx(overlap_mgf_exact(t15, 0.5, 60, 60), rel=1e-11)


def test_overlap_mgf_matches_monte_carlo(k15, t15):
    rng = np.random.default_rng(7)
    mean, se = mc_overlap_mgf(k15, 0.1, 64, 64, 10_000, rng)
    assert abs(overlap_mgf(t15, 0.1, 64, 64) - mean) < 3 * se


def test_persistent_for_alpha_above_one(k15, t15):
    rep = sigma_termination_report(t15, k15)
    assert rep.persistent


def test_termination_report_inconclusive_on_small_grid():
    k = build_kernel(0.5)
    t = intersection_tables(renewal_mass(k, 16, 16), q_box=16)
    with pytest.raises(InconclusiveError):
        sigma_termination_report(t, k, max_rel_width=1e-6)


@pytest.mark.slow
def test_termination_alpha_05(large):
    k = large.kernel(0.5)
    t = large.tables(0.5, 2048)
    rep = sigma_termination_report(t, k)
    lo, hi = rep.E_abs_sigma
    assert not rep.persistent
    assert math.isfinite(hi) and (hi - lo) < 0.05 * lo
    p_lo, p_hi = rep.P_sigma1_finite
    assert 0.0 < p_lo <= p_hi < 1.0


def test_tail_constant_target_closed_form():
    assert tail_constant_target(0.5) == pytest.approx(2 * math.sqrt(2) / math.pi, rel=1e-15)
    rho = 1 / 3
    expected = 2**rho * math.sin(math.pi * rho) / (math.pi * rho)
    assert tail_constant_target(rho) == pytest.approx(expected, rel=1e-15)
    assert tail_constant_target(rho) == pytest.approx(1.042, abs=5e-4)


def test_U_fit_rejects_small_alpha():
    k = build_kernel(0.5)
    t = intersection_tables(renewal_mass(k, 64, 64))
    with pytest.raises(ValueError):
        fit_U_exponent(t)
