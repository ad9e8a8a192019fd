"""Pure numpy versions of the compiled kernels in ``_core.pyx``.

Same signatures and the same block floating-point scheme; each target
anti-diagonal is evaluated with one vectorized gather over all source
diagonals. Used when the extension is not built, and as the baseline in
``benchmarks/bench_kernels.py``.
"""
from __future__ import annotations

import numpy as np


def _diag_bounds(d: np.ndarray | int, N: int, M: int):
    return np.maximum(0, d - M), np.minimum(d, N)


def _range_sums(pre, suf, d, lo, hi, amin_d):
    """Vectorized counterpart of the compiled ``_range_sum`` helper."""
    i_lo = lo - amin_d
    i_hi = hi - amin_d
    left_out = pre[d, i_lo]
    right_out = suf[d, i_hi + 1]
    s_left = pre[d, i_hi + 1] - left_out
    s_right = suf[d, i_lo] - right_out
    out = np.where(left_out < right_out, s_left, s_right)
    tie = left_out == right_out
    if np.any(tie):
        out = np.where(tie, 0.5 * (s_left + s_right), out)
    return out


def _cumsum_seq(vals: np.ndarray) -> np.ndarray:
    # strictly sequential accumulation, matching the compiled loop order
    out = np.empty(len(vals) + 1)
    out[0] = 0.0
    np.cumsum(vals, out=out[1:])
    return out


def pinned_dp(kmant: np.ndarray, kexp: np.ndarray, logw: np.ndarray):
    """See :func:`gpslab._core.pinned_dp`."""
    N = logw.shape[0] - 1
    M = logw.shape[1] - 1
    nd = N + M + 1
    width = min(N, M) + 2
    if len(kmant) < nd or len(kexp) < nd:
        raise ValueError("kernel table shorter than N + M + 1")
    mant = np.zeros((N + 1, M + 1))
    dexp = np.zeros(nd, dtype=np.int64)
    pre = np.zeros((nd, width))
    suf = np.zeros((nd, width))
    mant[0, 0] = 1.0
    pre[0, 1] = 1.0
    suf[0, 0] = 1.0
    kexp = np.asarray(kexp, dtype=np.int64)
    for D in range(1, nd):
        amin, amax = _diag_bounds(D, N, M)
        n_lo, n_hi = max(1, D - M), min(N, D - 1)
        d = np.arange(D - 1)
        amin_d, amax_d = _diag_bounds(d, N, M)
        tot = pre[d, amax_d - amin_d + 1]
        live = tot > 0
        if not np.any(live) or n_lo > n_hi:
            continue
        _, ex = np.frexp(tot[live])
        e_top = int(np.max(kexp[D - d[live]] + dexp[d[live]] + ex))
        shift = kexp[D - d] + dexp[d] - e_top
        scale = np.where(
            live & (shift >= -1100),
            np.ldexp(kmant[D - d], np.clip(shift, -1100, 1100).astype(np.int32)),
            0.0,
        )
        n = np.arange(n_lo, n_hi + 1)[:, None]
        m = D - n
        lo = np.maximum(amin_d[None, :], d[None, :] - m + 1)
        hi = np.minimum(amax_d[None, :], n - 1)
        ok = (lo <= hi) & (scale[None, :] != 0.0)
        lo_c = np.where(ok, lo, amin_d[None, :])
        hi_c = np.where(ok, hi, amin_d[None, :])
        dd = np.broadcast_to(d[None, :], lo.shape)
        s = _range_sums(pre, suf, dd, lo_c, hi_c, amin_d[None, :])
        acc = np.where(ok, scale[None, :] * s, 0.0).sum(axis=1)
        cells = n[:, 0]
        acc = acc * np.exp(logw[cells, D - cells])
        mx = acc.max()
        if mx > 0:
            _, e_mx = np.frexp(mx)
            acc = np.ldexp(acc, -int(e_mx))
            dexp[D] = e_top + int(e_mx)
        mant[cells, D - cells] = acc
        a = np.arange(amin, amax + 1)
        vals = mant[a, D - a]
        pre[D, : len(vals) + 1] = _cumsum_seq(vals)
        suf[D, : len(vals) + 1] = _cumsum_seq(vals[::-1])[::-1]
    return mant, dexp


def rect_convolve(src: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """See :func:`gpslab._core.rect_convolve`."""
    N = src.shape[0] - 1
    M = src.shape[1] - 1
    nd = N + M + 1
    if len(kern) < nd:
        raise ValueError("kernel table shorter than N + M + 1")
    width = min(N, M) + 2
    pre = np.zeros((nd, width))
    suf = np.zeros((nd, width))
    for d in range(nd):
        amin, amax = _diag_bounds(d, N, M)
        a = np.arange(amin, amax + 1)
        vals = src[a, d - a]
        pre[d, : len(vals) + 1] = _cumsum_seq(vals)
        suf[d, : len(vals) + 1] = _cumsum_seq(vals[::-1])[::-1]
    out = np.zeros((N + 1, M + 1))
    for D in range(2, nd):
        n_lo, n_hi = max(1, D - M), min(N, D - 1)
        if n_lo > n_hi:
            continue
        d = np.arange(D - 1)
        amin_d, amax_d = _diag_bounds(d, N, M)
        n = np.arange(n_lo, n_hi + 1)[:, None]
        m = D - n
        lo = np.maximum(amin_d[None, :], d[None, :] - m + 1)
        hi = np.minimum(amax_d[None, :], n - 1)
        ok = lo <= hi
        lo_c = np.where(ok, lo, amin_d[None, :])
        hi_c = np.where(ok, hi, amin_d[None, :])
        dd = np.broadcast_to(d[None, :], lo.shape)
        s = _range_sums(pre, suf, dd, lo_c, hi_c, amin_d[None, :])
        acc = np.where(ok, kern[D - d][None, :] * s, 0.0).sum(axis=1)
        cells = n[:, 0]
        out[cells, D - cells] = acc
    return out


def _inner_conv(a: np.ndarray, b: np.ndarray, n: int, m: int) -> float:
    if n < 2 or m < 2:
        return 0.0
    return float(np.sum(a[1:n, 1:m] * b[n - 1 : 0 : -1, m - 1 : 0 : -1]))


def invert_renewal(v: np.ndarray) -> np.ndarray:
    """See :func:`gpslab._core.invert_renewal`."""
    N, M = v.shape[0] - 1, v.shape[1] - 1
    q = np.zeros_like(v, dtype=np.float64)
    for n in range(1, N + 1):
        for m in range(1, M + 1):
            q[n, m] = v[n, m] - _inner_conv(q, v, n, m)
    return q


def tilted_renewal(q: np.ndarray, x: float) -> np.ndarray:
    """See :func:`gpslab._core.tilted_renewal`."""
    N, M = q.shape[0] - 1, q.shape[1] - 1
    w = np.zeros_like(q, dtype=np.float64)
    w[0, 0] = 1.0
    for n in range(1, N + 1):
        for m in range(1, M + 1):
            w[n, m] = x * (q[n, m] + _inner_conv(q, w, n, m))
    return w


def forward_convolve(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """See :func:`gpslab._core.forward_convolve`."""
    N, M = q.shape[0] - 1, q.shape[1] - 1
    out = np.zeros_like(q, dtype=np.float64)
    for n in range(1, N + 1):
        for m in range(1, M + 1):
            out[n, m] = q[n, m] * v[0, 0] + _inner_conv(q, v, n, m)
    return out
