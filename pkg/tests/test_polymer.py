import math
from fractions import Fraction

import numpy as np
import pytest

from gpslab.disorder import DisorderSpec
from gpslab.errors import BudgetError, RangeError
from gpslab.kernel import build_kernel
from gpslab.oracles import naive_partition
from gpslab.polymer import (ModelParams, annealed_quantities, constrained_partition,
                            free_partition, homogeneous_critical_scan,
                            homogeneous_free_energy_limit, quenched_free_energy,
                            rational_gamma, rectangle_partition, sandwich_check,
                            superadditivity_check)
from gpslab.renewal import renewal_mass


@pytest.fixture(scope="module")
def k15():
    return build_kernel(1.5)


@pytest.fixture(scope="module")
def gauss():
    return DisorderSpec("gaussian_unit", 2024)


def test_single_site(k15, gauss):
    p = ModelParams(0.7, -0.2)
    fld = gauss.field(0)
    pg = constrained_partition(k15, p, fld, 1, 1)
    expected = float(k15.K(2)) * math.exp(0.7 * fld[1, 1] - 0.2)
    assert math.exp(pg.log_value(1, 1)) == pytest.approx(expected, rel=1e-14)


def test_homogeneous_two_by_two(k15):
    h = 0.3
    pg = constrained_partition(k15, ModelParams(0.0, h), None, 2, 2)
    K = k15.values(4)
    expected = math.exp(h) * K[4] + math.exp(2 * h) * K[2] ** 2
    assert math.exp(pg.log_value(2, 2)) == pytest.approx(expected, rel=1e-14)


def test_grid_boundary_conventions(k15, gauss):
    pg = constrained_partition(k15, ModelParams(0.5, 0.1), gauss.field(0), 6, 9)
    L = pg.logZ
    assert L[0, 0] == 0.0
    assert np.all(L[1:, 0] == -np.inf) and np.all(L[0, 1:] == -np.inf)


def test_zero_energy_is_renewal_mass(k15):
    pg = constrained_partition(k15, ModelParams(), None, 30, 40)
    assert np.allclose(pg.logZ[1:, 1:], renewal_mass(k15, 30, 40).log_u[1:, 1:], rtol=0, atol=1e-13)


@pytest.mark.parametrize("alpha", [0.5, 3.0])
def test_disordered_dp_matches_naive(alpha, gauss):
    k = build_kernel(alpha)
    p = ModelParams(0.8, -0.4)
    fld = gauss.field(1)
    pg = constrained_partition(k, p, fld, 15, 19)
    logw = p.beta * fld.grid(15, 19) + p.h
    Z = naive_partition(k, logw)
    mask = Z > 0
    assert np.max(np.abs(np.exp(pg.logZ[mask]) - Z[mask]) / Z[mask]) < 1e-12


def test_free_partition_total_probability(k15):
    for N in (1, 7, 64):
        pg = constrained_partition(k15, ModelParams(), None, N, N + 3)
        assert abs(math.exp(free_partition(pg)) - 1.0) < 1e-9


def test_free_partition_hand_value(k15):
    h = 0.4
    pg = constrained_partition(k15, ModelParams(0.0, h), None, 1, 1)
    expected = float(k15.exit_probability(1, 1)) + math.exp(h) * float(k15.K(2))
    assert math.exp(free_partition(pg)) == pytest.approx(expected, rel=1e-13)


def test_rectangle_partition_conventions(k15, gauss):
    p = ModelParams(0.6, -0.1)
    fld = gauss.field(0)
    assert rectangle_partition(k15, p, fld, (3, 4), (3, 4)) == 1.0
    assert rectangle_partition(k15, p, fld, (3, 4), (3, 9)) == 0.0
    assert rectangle_partition(k15, p, fld, (3, 4), (8, 4)) == 0.0
    pg = constrained_partition(k15, p, fld, 9, 12)
    assert math.log(rectangle_partition(k15, p, fld, (0, 0), (9, 12))) == pytest.approx(
        pg.log_value(9, 12), rel=1e-13)


def test_rectangle_partition_uses_shifted_field(k15, gauss):
    p = ModelParams(0.6, -0.1)
    fld = gauss.field(0)
    direct = rectangle_partition(k15, p, fld, (3, 4), (10, 14))
    pg = constrained_partition(k15, p, fld.shift(3, 4), 7, 10)
    assert math.log(direct) == pytest.approx(pg.log_value(7, 10), rel=1e-13)


def test_budget(k15):
    with pytest.raises(BudgetError):
        constrained_partition(k15, ModelParams(), None, 500, 500, budget=1e5)


def test_weight_range_error(k15, gauss):
    with pytest.raises(RangeError):
        constrained_partition(k15, ModelParams(400.0, 0.0), gauss.field(0), 10, 10)


def test_rational_gamma():
    assert rational_gamma(1.5) == Fraction(3, 2)
    assert rational_gamma(Fraction(4, 6)) == Fraction(2, 3)
    g = rational_gamma(math.pi)
    assert g.denominator <= 64 and abs(g - math.pi) < 1e-3
    p = ModelParams(0.1, 0.0, Fraction(6, 4))
    assert (p.p, p.q) == (3, 2) and p.M_of(10) == 15


def test_quenched_beta_zero_is_homogeneous(k15, gauss):
    p = ModelParams(0.0, 0.05)
    est = quenched_free_energy(k15, p, gauss, [32, 64], replicas=4)
    pg = constrained_partition(k15, p, None, 64, 64)
    for e in est:
        assert np.ptp(e.values) == 0.0
        assert e.mean == pytest.approx(pg.log_value(e.N, e.N) / e.N, rel=1e-13)


def test_quenched_monotone_in_h(k15, gauss):
    lo = quenched_free_energy(k15, ModelParams(0.8, -0.3), gauss, [48], replicas=6)[0]
    hi = quenched_free_energy(k15, ModelParams(0.8, -0.2), gauss, [48], replicas=6)[0]
    assert np.all(hi.values > lo.values)


def test_quenched_lower_bound_flag(k15, gauss):
    p = ModelParams(0.5, 0.0, Fraction(3, 2))
    est = quenched_free_energy(k15, p, gauss, [10, 11], replicas=2)
    assert [e.is_lower_bound for e in est] == [True, False]
    assert [e.M for e in est] == [15, 16]


def test_quenched_thread_invariance(k15, gauss):
    p = ModelParams(0.8, -0.3)
    a = quenched_free_energy(k15, p, gauss, [24, 40], replicas=5, threads=1)
    b = quenched_free_energy(k15, p, gauss, [24, 40], replicas=5, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.values, y.values)


def test_annealed_critical_points(k15):
    g = DisorderSpec("gaussian_unit")
    r = DisorderSpec("rademacher_unit")
    assert annealed_quantities(k15, ModelParams(1.0, 0.0), g).h_c_annealed == -0.5
    assert annealed_quantities(k15, ModelParams(0.0, 0.0), g).h_c_annealed == 0.0
    assert annealed_quantities(k15, ModelParams(1.0, 0.0), r).h_c_annealed == pytest.approx(
        -math.log(math.cosh(1.0)), rel=1e-15)
    assert -math.log(math.cosh(1.0)) == pytest.approx(-0.4338, abs=1e-4)


def test_annealed_is_shifted_homogeneous(k15):
    g = DisorderSpec("gaussian_unit")
    a = annealed_quantities(k15, ModelParams(0.6, -0.1), g, N=40)
    pg = constrained_partition(k15, ModelParams(0.0, -0.1 + 0.18), None, 40, 40)
    assert a.log_annealed_Z == pytest.approx(pg.log_value(40, 40), rel=1e-13)


def test_sandwich_random_seeds(k15):
    for seed in range(20):
        spec = DisorderSpec("gaussian_unit", seed)
        pg = constrained_partition(k15, ModelParams(0.7, -0.2), spec.field(0), 64, 64)
        res = sandwich_check(pg, k15)
        assert res.ok and res.lower_ok and res.upper_ok


def test_sandwich_zero_energy(k15):
    pg = constrained_partition(k15, ModelParams(), None, 40, 50)
    res = sandwich_check(pg, k15)
    u = renewal_mass(k15, 40, 50).u[40, 50]
    assert res.log_ratio == pytest.approx(-math.log(u), rel=1e-11)


def test_superadditivity_small_cases(k15, gauss):
    assert superadditivity_check(k15, ModelParams(0.9, -0.3), gauss, 1, 1).holds
    res = superadditivity_check(k15, ModelParams(0.0, 0.2, Fraction(3, 2)), gauss, 2, 3)
    assert res.holds and res.margin >= -1e-12


def test_homogeneous_zero_pinning_decreases(k15):
    Ns = (64, 256, 1024)
    F = np.array([homogeneous_critical_scan(k15, 1, [0.0], N).F_N[0] for N in Ns])
    # F_N = log u[N, N] / N < 0 tends to 0 on the (log N) / N scale
    assert np.all(F < 0) and np.all(np.diff(np.abs(F)) < 0)
    ratio = np.abs(F) * np.array(Ns) / np.log(Ns)
    assert np.all((ratio > 0.2) & (ratio < 5))


def test_homogeneous_limit_positive_and_increasing(k15):
    f = [homogeneous_free_energy_limit(k15, h) for h in (0.01, 0.05, 0.2)]
    assert 0 < f[0] < f[1] < f[2]
    assert homogeneous_free_energy_limit(k15, 0.0) == 0.0
