import numpy as np
import pytest

from gpslab import _backend, _fallback
from gpslab.kernel import build_kernel

_core = pytest.importorskip("gpslab._core")


@pytest.fixture(scope="module")
def k15():
    return build_kernel(1.5)


def _close(a, b, rtol=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    scale = np.maximum(np.abs(a), np.abs(b))
    return np.all(np.abs(a - b) <= rtol * scale + 1e-300)


def test_compiled_backend_selected():
    assert _backend.BACKEND == "cython" and _backend.kernels is _core


@pytest.mark.parametrize("N,M", [(1, 1), (7, 3), (24, 40), (50, 50)])
def test_pinned_dp(k15, N, M):
    km, ke = k15.scaled_values(N + M)
    logw = 0.4 * np.random.default_rng(N * M).standard_normal((N + 1, M + 1)) - 0.2
    m1, e1 = _fallback.pinned_dp(km, ke, logw)
    m2, e2 = _core.pinned_dp(km, ke, logw)
    # compare the values mantissa * 2**dexp[n + m] in log space
    d = np.add.outer(np.arange(N + 1), np.arange(M + 1))
    with np.errstate(divide="ignore"):
        l1 = np.log(m1) + np.log(2.0) * np.asarray(e1)[d]
        l2 = np.log(np.asarray(m2)) + np.log(2.0) * np.asarray(e2)[d]
    assert np.array_equal(np.isfinite(l1), np.isfinite(l2))
    f = np.isfinite(l1)
    assert np.allclose(l1[f], l2[f], rtol=0, atol=1e-12)
    assert m1.shape == (N + 1, M + 1)


@pytest.mark.parametrize("N,M", [(2, 2), (9, 17), (40, 33)])
def test_rect_convolve(k15, N, M):
    src = np.random.default_rng(1).random((N + 1, M + 1))
    kern = k15.values(N + M)
    assert _close(_fallback.rect_convolve(src, kern), _core.rect_convolve(src, kern))


def test_renewal_table_kernels():
    rng = np.random.default_rng(2)
    v = np.zeros((13, 11))
    v[1:, 1:] = rng.random((12, 10)) * 0.05
    q1, q2 = _fallback.invert_renewal(v), _core.invert_renewal(v)
    assert _close(q1, q2)
    assert _close(_fallback.tilted_renewal(q1, 0.7), _core.tilted_renewal(q1, 0.7))
    v0 = v.copy()
    v0[0, 0] = 1.0
    assert _close(_fallback.forward_convolve(q1, v0), _core.forward_convolve(q1, v0))
