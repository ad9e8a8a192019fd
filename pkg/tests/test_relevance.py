import math

import numpy as np
import pytest

from gpslab.disorder import DisorderSpec
from gpslab.errors import ConfigError
from gpslab.intersection import intersection_tables, sigma_termination_report
from gpslab.kernel import build_kernel, build_tail_sums
from gpslab.oracles import brute_force_rho, exhaustive_binary_frac_moment
from gpslab.polymer import ModelParams, constrained_partition
from gpslab.relevance import (compute_beta1, compute_N_beta, decomposition_identity_check,
                              deloc_certificate, frac_moment_jensen_bound, frac_moment_mc,
                              frac_moment_tilt_bound, rho_terms, second_moment_curve,
                              small_box_partitions, strip_mask, tilt_penalty, tilt_schedule)
from gpslab.renewal import renewal_mass

GAUSS = DisorderSpec("gaussian_unit", 11)
RADEM = DisorderSpec("rademacher_unit", 11)


@pytest.fixture(scope="module")
def k15():
    return build_kernel(1.5)


@pytest.fixture(scope="module")
def t15(k15):
    return intersection_tables(renewal_mass(k15, 128, 128))


@pytest.fixture(scope="module")
def t3():
    return intersection_tables(renewal_mass(build_kernel(3.0), 256, 256))


# -- second moment ---------------------------------------------------------------

def test_second_moment_beta_zero(t15):
    assert np.all(second_moment_curve(t15, GAUSS, 0.0, np.arange(1, 100)) == 1.0)


def test_second_moment_hand_value(k15, t15):
    lam = 0.3**2  # log Q(2b) - 2 log Q(b) for the Gaussian law
    hand = 1.0 + math.expm1(lam) * float(k15.K(2)) ** 2
    assert second_moment_curve(t15, GAUSS, 0.3, [1])[0] == pytest.approx(hand, rel=1e-14)


def test_second_moment_monotone(t15):
    N = np.arange(1, 129)
    prev = None
    for b in (0.2, 0.5, 0.8):
        c = second_moment_curve(t15, GAUSS, b, N)
        assert np.all(np.diff(c) >= -1e-12 * c[1:])
        if prev is not None:
            assert np.all(c >= prev)
        prev = c


def test_second_moment_overflow_is_inf(t15):
    c = second_moment_curve(t15, GAUSS, 5.0, [1, 8, 64, 128])
    assert np.all(np.isfinite(c[:2])) and np.all(np.isinf(c[2:]))
    assert np.isinf(second_moment_curve(t15, GAUSS, 30.0, [1])[0])
    hand = 1.0 + math.expm1(25.0) * float(t15.v[1, 1])
    assert c[0] == pytest.approx(hand, rel=1e-12)


def test_beta1_zero_when_persistent(k15, t15):
    b = compute_beta1(k15, GAUSS, t15)
    assert b.lo == 0.0 and b.hi == 0.0


@pytest.mark.slow
def test_beta1_gaussian_closed_form(large):
    k = large.kernel(0.5)
    t = large.tables(0.5, 2048)
    b = compute_beta1(k, GAUSS, t)
    assert 0.0 < b.lo <= b.hi
    # the excess is exactly beta**2, so beta1 = sqrt(-log P(sigma_1 < inf))
    rep = sigma_termination_report(t, k)
    p_lo, p_hi = rep.P_sigma1_finite
    assert b.lo == pytest.approx(math.sqrt(-math.log(p_hi)), rel=1e-12)
    assert b.hi == pytest.approx(math.sqrt(-math.log(p_lo)), rel=1e-12)
    # E|sigma| counts the origin: P(sigma_1 < inf) = 1 - 1 / E|sigma|
    e_lo, e_hi = rep.E_abs_sigma
    assert p_lo == pytest.approx(1 - 1 / e_lo, rel=1e-12)
    assert p_hi == pytest.approx(1 - 1 / e_hi, rel=1e-12)


@pytest.mark.slow
def test_beta1_rademacher_saturates(large):
    # log cosh(2b) - 2 log cosh(b) < log 2, so the bound is empty when -log p > log 2
    k = large.kernel(0.5)
    t = large.tables(0.5, 2048)
    b = compute_beta1(k, RADEM, t)
    p_lo, _ = sigma_termination_report(t, k).P_sigma1_finite
    if -math.log(p_lo) > math.log(2):
        assert b.hi == math.inf


def test_N_beta_zero_beta_exhausts_grid(t3):
    r = compute_N_beta(t3, GAUSS, 0.0)
    assert r.exhausted and r.N_beta == 256


def test_N_beta_non_increasing(t3):
    vals = [compute_N_beta(t3, GAUSS, b).N_beta for b in np.linspace(0.4, 1.0, 7)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[0] > vals[-1]


# -- fractional moments --------------------------------------------------------

def test_jensen_single_site(k15):
    p = ModelParams(0.8, -0.2)
    jb, _ = frac_moment_jensen_bound(k15, p, GAUSS, 1, 1, 0.7)
    expected = (math.exp(-0.2 + 0.32) * float(k15.K(2))) ** 0.7
    assert jb == pytest.approx(expected, rel=1e-14)


def test_jensen_tighter_than_coarse_bound(k15):
    ks = 16
    p = ModelParams(1.0, -0.5 + 1.0 / ks)
    for i, j in ((1, 1), (3, 7), (15, 15)):
        jb, coarse = frac_moment_jensen_bound(k15, p, GAUSS, i, j, 0.9)
        assert jb <= coarse


@pytest.mark.parametrize("i,j", [(2, 2), (3, 3), (1, 3), (3, 2)])
def test_bounds_above_exhaustive(k15, i, j):
    p = ModelParams(0.8, -0.3)
    ex = exhaustive_binary_frac_moment(k15, p, i, j, 0.7)
    jb, _ = frac_moment_jensen_bound(k15, p, RADEM, i, j, 0.7)
    tb = frac_moment_tilt_bound(k15, p, RADEM, i, j, 0.7, 0.1, 1)
    assert jb >= ex and tb >= ex


def test_tilt_zero_lambda_is_jensen(k15):
    p = ModelParams(1.0, -0.4)
    jb, _ = frac_moment_jensen_bound(k15, p, GAUSS, 20, 24, 0.9)
    assert frac_moment_tilt_bound(k15, p, GAUSS, 20, 24, 0.9, 0.0, 3) == pytest.approx(jb, rel=1e-13)


def test_tilt_beats_jensen_deep_on_diagonal(k15):
    p = ModelParams(1.0, -0.5 + 1.0 / 64)
    jb, _ = frac_moment_jensen_bound(k15, p, GAUSS, 64, 64, 0.9)
    assert frac_moment_tilt_bound(k15, p, GAUSS, 64, 64, 0.9, 0.004, 2) < jb


def test_tilt_lambda_range(k15):
    with pytest.raises(ValueError):
        frac_moment_tilt_bound(k15, ModelParams(1.0, 0.0), GAUSS, 4, 4, 0.9, 0.2, 1)


def test_tilt_penalty_value():
    lam, d = 0.05, 0.8
    assert tilt_penalty(GAUSS, lam, d) == pytest.approx(lam**2 * d / (2 * (1 - d)), rel=1e-14)
    assert tilt_penalty(GAUSS, 0.0, d) == 0.0


def test_strip_mask_excludes_axes():
    m = strip_mask(5, 6, 1.0)
    assert not m[0].any() and not m[:, 0].any()
    assert m[3, 3] and m[3, 5] and not m[1, 4]
    assert m.sum() == sum(1 for n in range(1, 6) for j in range(1, 7) if abs(n - j) <= 2)


def test_frac_moment_mc_beta_zero(k15):
    p = ModelParams(0.0, 0.1)
    est = frac_moment_mc(k15, p, GAUSS, 5, 6, 0.8, replicas=10)
    z = float(constrained_partition(k15, p, None, 5, 6).value(5, 6))
    assert est.std_err == 0.0 and est.mean == pytest.approx(z**0.8, rel=1e-14)


def test_small_box_partitions_match_dp(k15):
    fld = GAUSS.field(3)
    p = ModelParams(0.9, -0.2)
    logw = p.beta * fld.grid(9, 11) + p.h
    Z = small_box_partitions(k15, logw[None])[0]
    pg = constrained_partition(k15, p, fld, 9, 11)
    assert np.allclose(Z[1:, 1:], pg.grid.to_float()[1:, 1:], rtol=1e-12, atol=0)


def test_tilt_schedule_admissible_and_unique():
    sched = tilt_schedule(1.5, 64, 0.9)
    lam_max = min(1.0, 0.1 / 0.9)
    assert all(0 < c.lam <= lam_max + 1e-15 for c in sched)
    keys = [(int(2 * c.ell), round(c.lam, 15)) for c in sched]
    assert len(keys) == len(set(keys))
    assert any(c.tag.startswith("rule-rule") for c in sched)


# -- coarse-grained sums -------------------------------------------------------

def test_rho_zero_grid(k15):
    tails = build_tail_sums(k15, 0.9, 20)
    assert rho_terms(np.zeros((6, 6)), 6, 0.9, tails, 1.3) == (0.0, 0.0, 0.0)


def test_rho_symmetric_grid(k15):
    tails = build_tail_sums(k15, 0.9, 20)
    A = np.random.default_rng(0).random((6, 6))
    A = A + A.T
    r1, r2, r3 = rho_terms(A, 6, 0.9, tails, 1.0)
    assert r2 == r3


def test_rho_matches_brute_force_all_ones(k15):
    tails = build_tail_sums(k15, 0.9, 12, truncate_at=2000)
    A = np.ones((6, 6))
    g = rho_terms(A, 6, 0.9, tails, 1.0)
    b = brute_force_rho(A, k15, 0.9, 1.0, 2000)
    for x, y in zip(g, b):
        assert x == pytest.approx(y, rel=1e-10)


def test_rho_linear_in_ez(k15):
    tails = build_tail_sums(k15, 0.9, 20)
    A = np.random.default_rng(1).random((6, 6))
    a = np.array(rho_terms(A, 6, 0.9, tails, 1.0))
    b = np.array(rho_terms(A, 6, 0.9, tails, 2.5))
    assert np.allclose(b, 2.5 * a, rtol=1e-14)


def test_decomposition_identity(k15):
    for seed in range(3):
        fld = DisorderSpec("gaussian_unit", seed).field(0)
        assert decomposition_identity_check(k15, ModelParams(0.7, -0.2), fld, 20, 23, 6).ok


def test_decomposition_degenerate_and_homogeneous(k15):
    fld = GAUSS.field(0)
    assert decomposition_identity_check(k15, ModelParams(0.7, -0.2), fld, 12, 12, 1).ok
    assert decomposition_identity_check(k15, ModelParams(0.0, 0.1), None, 16, 16, 8).ok


# -- certificate -----------------------------------------------------------------

def test_certificate_rejects_bad_parameters(k15):
    with pytest.raises(ConfigError):
        deloc_certificate(k15, GAUSS, 1.0, -0.5, 0.9, 8)        # Delta = 0
    with pytest.raises(ConfigError):
        deloc_certificate(k15, GAUSS, 1.0, -0.5 + 0.5, 0.9, 8)  # Delta * k > 1
    with pytest.raises(ConfigError):
        deloc_certificate(k15, GAUSS, 1.0, -0.4, 0.5, 8)        # (2 + alpha) delta <= 2
    with pytest.raises(ConfigError):
        deloc_certificate(k15, GAUSS, 1.0, -0.4, 1.0, 8)


def test_no_certificate_without_disorder(k15):
    for h in (0.05, 0.1):
        for delta in (0.7, 0.9, 0.99):
            for ks in (2, 4, 8):
                if h * ks > 1:
                    continue
                rep = deloc_certificate(k15, GAUSS, 0.0, h, delta, ks)
                assert not rep.certified and rep.rho_sum > 1


def test_certificate_bounds_dominate_monte_carlo(k15):
    ks, delta, beta = 6, 0.9, 1.0
    h = -0.5 + 1.0 / ks
    rep = deloc_certificate(k15, GAUSS, beta, h, delta, ks)
    R = 400
    om = np.stack([GAUSS.field(r).grid(ks - 1, ks - 1) for r in range(R)])
    Z = small_box_partitions(k15, beta * om + h) ** delta
    mean = Z.mean(0)
    se = Z.std(0, ddof=1) / math.sqrt(R)
    assert np.all(rep.A_upper[1:, 1:] >= mean[1:, 1:] - 3 * se[1:, 1:])


def test_certificate_report_json(k15):
    rep = deloc_certificate(k15, GAUSS, 1.0, -0.5 + 1 / 8, 0.9, 8)
    d = rep.to_json_dict()
    assert d["rho1"] + d["rho2"] + d["rho3"] == pytest.approx(rep.rho_sum)
    assert sum(d["per_cell_bound_source"].values()) == 7 * 7
    assert rep.strong_delta_condition is None
