# cython: language_level=3
"""Compiled kernels for the anti-diagonal dynamic programs.

All grids are indexed ``[n, m]`` with ``n`` along the first strand and ``m``
along the second. Every jump of the renewal increases both coordinates, so a
cell on anti-diagonal ``D = n + m`` only receives mass from cells ``(a, b)``
with ``a < n``, ``b < m`` and hence ``a + b <= D - 2``.

The pinned recursion is evaluated in block floating point: one ``int64``
exponent per anti-diagonal plus double mantissas. Range sums over a source
diagonal come from a prefix array or a suffix array, whichever side excludes
less mass, which keeps the subtraction well conditioned.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport frexp, ldexp, exp

cnp.import_array()

ctypedef long long i64


cdef inline Py_ssize_t _imax(Py_ssize_t a, Py_ssize_t b) nogil:
    return a if a > b else b


cdef inline Py_ssize_t _imin(Py_ssize_t a, Py_ssize_t b) nogil:
    return a if a < b else b


cdef inline double _range_sum(const double* pre, const double* suf,
                              Py_ssize_t lo, Py_ssize_t hi) nogil:
    # Sum of entries lo..hi (inclusive, local indices) of one diagonal.
    cdef double left_out = pre[lo]
    cdef double right_out = suf[hi + 1]
    cdef double s_left, s_right
    if left_out < right_out:
        return pre[hi + 1] - left_out
    elif left_out > right_out:
        return suf[lo] - right_out
    s_left = pre[hi + 1] - left_out
    s_right = suf[lo] - right_out
    return 0.5 * (s_left + s_right)


def pinned_dp(const double[::1] kmant, const i64[::1] kexp,
              const double[:, ::1] logw):
    """Pinned partition recursion in block floating point.

    Computes ``Z[n, m] = w[n, m] * sum_{a<n, b<m} Z[a, b] K(n-a+m-b)`` with
    ``Z[0, 0] = 1`` and ``Z = 0`` on the two axes.

    Parameters
    ----------
    kmant, kexp : arrays of length at least ``N + M + 1``
        ``K(t) = kmant[t] * 2**kexp[t]``; entries for ``t < 2`` are ignored.
    logw : (N+1, M+1) array
        Natural log of the site weight ``w[n, m]``; entries on the axes are
        ignored.

    Returns
    -------
    mant : (N+1, M+1) ndarray
        Mantissas; ``Z[n, m] = mant[n, m] * 2**dexp[n + m]``.
    dexp : (N+M+1,) int64 ndarray
        One binary exponent per anti-diagonal.
    """
    cdef Py_ssize_t N = logw.shape[0] - 1
    cdef Py_ssize_t M = logw.shape[1] - 1
    cdef Py_ssize_t nd = N + M + 1
    cdef Py_ssize_t width = _imin(N, M) + 2
    if kmant.shape[0] < nd or kexp.shape[0] < nd:
        raise ValueError("kernel table shorter than N + M + 1")

    mant_arr = np.zeros((N + 1, M + 1), dtype=np.float64)
    dexp_arr = np.zeros(nd, dtype=np.int64)
    pre_arr = np.zeros((nd, width), dtype=np.float64)
    suf_arr = np.zeros((nd, width), dtype=np.float64)
    scale_arr = np.zeros(nd, dtype=np.float64)
    acc_arr = np.zeros(N + 1, dtype=np.float64)
    cdef double[::1] acc_row = acc_arr
    cdef double[:, ::1] mant = mant_arr
    cdef i64[::1] dexp = dexp_arr
    cdef double[:, ::1] pre = pre_arr
    cdef double[:, ::1] suf = suf_arr
    cdef double[::1] scale = scale_arr

    cdef Py_ssize_t D, d, n, a, lo, hi, amin_d, amax_d, amin, amax, length
    cdef Py_ssize_t n_lo, n_hi
    cdef int ex
    cdef i64 e_top, e_d, shift
    cdef bint any_mass
    cdef double acc, tot, mx, sc
    cdef const double* prow
    cdef const double* srow

    mant[0, 0] = 1.0
    pre[0, 1] = 1.0
    suf[0, 0] = 1.0

    with nogil:
        for D in range(1, nd):
            amin = _imax(0, D - M)
            amax = _imin(D, N)
            length = amax - amin + 1
            n_lo = _imax(1, D - M)
            n_hi = _imin(N, D - 1)
            # common exponent for this target diagonal
            any_mass = False
            e_top = 0
            for d in range(0, D - 1):
                amin_d = _imax(0, d - M)
                amax_d = _imin(d, N)
                tot = pre[d, amax_d - amin_d + 1]
                if tot > 0.0:
                    frexp(tot, &ex)
                    e_d = kexp[D - d] + dexp[d] + ex
                    if not any_mass or e_d > e_top:
                        e_top = e_d
                    any_mass = True
            if not any_mass or n_lo > n_hi:
                dexp[D] = 0
                continue
            for d in range(0, D - 1):
                shift = kexp[D - d] + dexp[d] - e_top
                if shift < -1100:
                    scale[d] = 0.0
                else:
                    scale[d] = ldexp(kmant[D - d], <int>shift)
            # source-diagonal-outer order: each row of pre/suf is read
            # sequentially; per cell the sum over d still runs in ascending d
            for n in range(n_lo, n_hi + 1):
                acc_row[n] = 0.0
            for d in range(0, D - 1):
                sc = scale[d]
                if sc == 0.0:
                    continue
                amin_d = _imax(0, d - M)
                amax_d = _imin(d, N)
                prow = &pre[d, 0]
                srow = &suf[d, 0]
                for n in range(n_lo, n_hi + 1):
                    lo = _imax(amin_d, d - (D - n) + 1)
                    hi = _imin(amax_d, n - 1)
                    if lo > hi:
                        continue
                    acc_row[n] = acc_row[n] + sc * _range_sum(prow, srow, lo - amin_d, hi - amin_d)
            mx = 0.0
            for n in range(n_lo, n_hi + 1):
                acc = acc_row[n] * exp(logw[n, D - n])
                mant[n, D - n] = acc
                if acc > mx:
                    mx = acc
            if mx > 0.0:
                frexp(mx, &ex)
                for n in range(n_lo, n_hi + 1):
                    mant[n, D - n] = ldexp(mant[n, D - n], -ex)
                dexp[D] = e_top + ex
            else:
                dexp[D] = 0
            # prefix and suffix sums along the new diagonal
            pre[D, 0] = 0.0
            for a in range(amin, amax + 1):
                pre[D, a - amin + 1] = pre[D, a - amin] + mant[a, D - a]
            suf[D, length] = 0.0
            for a in range(amax, amin - 1, -1):
                suf[D, a - amin] = suf[D, a - amin + 1] + mant[a, D - a]
    return mant_arr, dexp_arr


def rect_convolve(const double[:, ::1] src, const double[::1] kern):
    """Rectangle-restricted convolution with a kernel of the total jump.

    Returns ``out[n, m] = sum_{a<n, b<m} src[a, b] * kern[n-a+m-b]`` for
    ``n, m >= 1``, zero on the axes. Plain double arithmetic.
    """
    cdef Py_ssize_t N = src.shape[0] - 1
    cdef Py_ssize_t M = src.shape[1] - 1
    cdef Py_ssize_t nd = N + M + 1
    cdef Py_ssize_t width = _imin(N, M) + 2
    if kern.shape[0] < nd:
        raise ValueError("kernel table shorter than N + M + 1")
    out_arr = np.zeros((N + 1, M + 1), dtype=np.float64)
    pre_arr = np.zeros((nd, width), dtype=np.float64)
    suf_arr = np.zeros((nd, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] pre = pre_arr
    cdef double[:, ::1] suf = suf_arr
    cdef Py_ssize_t D, d, n, a, lo, hi, amin_d, amax_d, length, n_lo, n_hi
    cdef double kv
    cdef const double* prow
    cdef const double* srow

    with nogil:
        for d in range(nd):
            amin_d = _imax(0, d - M)
            amax_d = _imin(d, N)
            length = amax_d - amin_d + 1
            pre[d, 0] = 0.0
            for a in range(amin_d, amax_d + 1):
                pre[d, a - amin_d + 1] = pre[d, a - amin_d] + src[a, d - a]
            suf[d, length] = 0.0
            for a in range(amax_d, amin_d - 1, -1):
                suf[d, a - amin_d] = suf[d, a - amin_d + 1] + src[a, d - a]
        for D in range(2, nd):
            n_lo = _imax(1, D - M)
            n_hi = _imin(N, D - 1)
            for d in range(0, D - 1):
                kv = kern[D - d]
                amin_d = _imax(0, d - M)
                amax_d = _imin(d, N)
                prow = &pre[d, 0]
                srow = &suf[d, 0]
                for n in range(n_lo, n_hi + 1):
                    lo = _imax(amin_d, d - (D - n) + 1)
                    hi = _imin(amax_d, n - 1)
                    if lo > hi:
                        continue
                    out[n, D - n] = out[n, D - n] + kv * _range_sum(
                        prow, srow, lo - amin_d, hi - amin_d)
    return out_arr


cdef inline double _inner_conv(const double[:, ::1] a, const double[:, ::1] b,
                               Py_ssize_t n, Py_ssize_t m) nogil:
    # sum_{1<=i<n, 1<=j<m} a[i, j] * b[n-i, m-j]
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    for i in range(1, n):
        for j in range(1, m):
            acc = acc + a[i, j] * b[n - i, m - j]
    return acc


def invert_renewal(const double[:, ::1] v):
    """Inter-arrival law of a bivariate renewal from its mass function.

    Solves ``v = delta_0 + q * v`` for ``q`` supported on ``n, m >= 1``,
    given ``v`` with ``v[0, 0] = 1`` and zero axes. O(N^2 M^2).
    """
    cdef Py_ssize_t N = v.shape[0] - 1
    cdef Py_ssize_t M = v.shape[1] - 1
    q_arr = np.zeros((N + 1, M + 1), dtype=np.float64)
    cdef double[:, ::1] q = q_arr
    cdef Py_ssize_t n, m
    with nogil:
        for n in range(1, N + 1):
            for m in range(1, M + 1):
                q[n, m] = v[n, m] - _inner_conv(q, v, n, m)
    return q_arr


def tilted_renewal(const double[:, ::1] q, double x):
    """Solve ``w = delta_0 + x * (q * w)`` on the grid of ``q``. O(N^2 M^2)."""
    cdef Py_ssize_t N = q.shape[0] - 1
    cdef Py_ssize_t M = q.shape[1] - 1
    w_arr = np.zeros((N + 1, M + 1), dtype=np.float64)
    cdef double[:, ::1] w = w_arr
    cdef Py_ssize_t n, m
    w[0, 0] = 1.0
    with nogil:
        for n in range(1, N + 1):
            for m in range(1, M + 1):
                w[n, m] = x * (q[n, m] + _inner_conv(q, w, n, m))
    return w_arr


def forward_convolve(const double[:, ::1] q, const double[:, ::1] v):
    """``(q * v)[n, m]`` over ``1 <= i <= n, 1 <= j <= m`` including the
    ``v[0, 0]`` term; the exact residual check for :func:`invert_renewal`."""
    cdef Py_ssize_t N = q.shape[0] - 1
    cdef Py_ssize_t M = q.shape[1] - 1
    out_arr = np.zeros((N + 1, M + 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n, m
    with nogil:
        for n in range(1, N + 1):
            for m in range(1, M + 1):
                out[n, m] = q[n, m] * v[0, 0] + _inner_conv(q, v, n, m)
    return out_arr
