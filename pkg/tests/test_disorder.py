import math

import numpy as np
import pytest
from scipy import integrate

from gpslab.disorder import DisorderSpec


def test_golden_raw_words():
    # fixed-algorithm generator: these words must never change
    f = DisorderSpec("gaussian_unit", 12345).field(3)
    assert [int(x) for x in f.raw(1, 1, 1, 2)[0]] == [8337278726619409080, 17851470048746253899]
    assert int(f.raw(1000, 1000, 5, 5)[0, 0]) == 10638040218751561731


def test_golden_values():
    f = DisorderSpec("gaussian_unit", 12345).field(3)
    assert f[1, 1] == pytest.approx(-0.12069884886690337, rel=1e-14)
    assert f[7, 2] == pytest.approx(1.7941984117953622, rel=1e-14)
    r = DisorderSpec("rademacher_unit", 12345).field(3)
    assert (r[1, 1], r[7, 2], r[1000, 5]) == (-1.0, 1.0, 1.0)


def test_deterministic_and_window_consistent():
    spec = DisorderSpec("gaussian_unit", 99)
    a = spec.field(1).grid(20, 33)
    b = spec.field(1).grid(20, 33)
    assert np.array_equal(a, b)
    w = spec.field(1).window(5, 12, 7, 30)
    assert np.array_equal(w, a[5:13, 7:31])
    assert spec.field(1)[9, 17] == a[9, 17]


def test_replicas_and_seeds_differ():
    g0 = DisorderSpec("gaussian_unit", 1).field(0).grid(8, 8)
    g1 = DisorderSpec("gaussian_unit", 1).field(1).grid(8, 8)
    g2 = DisorderSpec("gaussian_unit", 2).field(0).grid(8, 8)
    assert not np.array_equal(g0, g1) and not np.array_equal(g0, g2)


def test_shift_is_exact():
    f = DisorderSpec("gaussian_unit", 5).field(2)
    base = f.grid(40, 50)
    sh = f.shift(7, 11)
    assert np.array_equal(sh.grid(20, 30), base[7:28, 11:42])
    assert np.array_equal(sh.shift(3, 4).grid(5, 5), base[10:16, 15:21])


def test_moments():
    for law in ("gaussian_unit", "rademacher_unit"):
        x = DisorderSpec(law, 3).field(0).grid(400, 400)[1:, 1:].ravel()
        n = x.size
        assert abs(x.mean()) < 4 / math.sqrt(n)
        assert abs(x.var() - 1) < 6 * math.sqrt(2 / n)


def test_rademacher_values():
    x = DisorderSpec("rademacher_unit", 3).field(0).grid(50, 50)
    assert set(np.unique(x)) == {-1.0, 1.0}


def test_log_Q_gaussian_by_integration():
    spec = DisorderSpec("gaussian_unit")
    val, _ = integrate.quad(lambda w: math.exp(w - w * w / 2) / math.sqrt(2 * math.pi),
                            -np.inf, np.inf, epsabs=0, epsrel=1e-13)
    assert spec.log_Q(1.0) == pytest.approx(math.log(val), rel=1e-12)
    assert spec.log_Q(1.0) == 0.5


def test_log_Q_rademacher():
    spec = DisorderSpec("rademacher_unit")
    assert spec.log_Q(1.0) == pytest.approx(math.log(math.cosh(1.0)), rel=1e-15)
    assert spec.log_Q(800.0) == pytest.approx(800.0 - math.log(2.0), rel=1e-15)


@pytest.mark.parametrize("law", ["gaussian_unit", "rademacher_unit"])
def test_log_Q_even_convex_zero(law):
    spec = DisorderSpec(law)
    b = np.linspace(-3, 3, 61)
    q = spec.log_Q(b)
    assert spec.log_Q(0.0) == 0.0
    assert np.array_equal(q, spec.log_Q(-b))
    assert np.all(np.diff(q, 2) >= -1e-14)


def test_bad_spec():
    with pytest.raises(ValueError):
        DisorderSpec("uniform")
    with pytest.raises(ValueError):
        DisorderSpec("gaussian_unit", -1)
