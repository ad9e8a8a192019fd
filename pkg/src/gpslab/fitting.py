"""Power-law exponent fits on dyadic grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares slope of ``log y`` against ``log x``.

    Attributes
    ----------
    slope : float
    ci_half_width : float
        95% half width from the regression standard error.
    window : tuple of int
        ``(x_lo, x_hi)`` bounds used to select points.
    intercept : float
    x : tuple of float
        The abscissae actually used.
    """

    slope: float
    ci_half_width: float
    window: tuple[int, int]
    intercept: float = 0.0
    x: tuple[float, ...] = ()

    def contains(self, target: float, tol: float) -> bool:
        """Whether ``|slope - target| <= tol``."""
        return abs(self.slope - target) <= tol


def dyadic_points(lo: int, hi: int) -> np.ndarray:
    """Powers of two in ``[lo, hi]``."""
    if lo < 1 or hi < lo:
        return np.array([], dtype=np.int64)
    k0 = int(np.ceil(np.log2(lo)))
    k1 = int(np.floor(np.log2(hi)))
    return 2 ** np.arange(k0, k1 + 1, dtype=np.int64)


def fit_loglog(x, y, window: tuple[int, int] | None = None, min_points: int = 4) -> ExponentFit:
    """Fit ``log y = slope * log x + c`` by ordinary least squares.

    Raises
    ------
    ValueError
        With fewer than ``min_points`` usable points or nonpositive ``y``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < min_points:
        raise ValueError(f"window too narrow: {len(x)} points, need {min_points}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("log-log fit needs positive finite ordinates")
    res = stats.linregress(np.log(x), np.log(y))
    tq = stats.t.ppf(0.975, len(x) - 2)
    win = window if window is not None else (int(x.min()), int(x.max()))
    return ExponentFit(float(res.slope), float(tq * res.stderr), win,
                       float(res.intercept), tuple(float(v) for v in x))


def fit_loglog_logy(x, logy, window: tuple[int, int] | None = None,
                    min_points: int = 4) -> ExponentFit:
    """As :func:`fit_loglog` but takes ``log y`` directly (no range limits)."""
    x = np.asarray(x, dtype=np.float64)
    logy = np.asarray(logy, dtype=np.float64)
    if len(x) < min_points:
        raise ValueError(f"window too narrow: {len(x)} points, need {min_points}")
    if not np.all(np.isfinite(logy)):
        raise ValueError("log-log fit needs finite log ordinates")
    res = stats.linregress(np.log(x), logy)
    tq = stats.t.ppf(0.975, len(x) - 2)
    win = window if window is not None else (int(x.min()), int(x.max()))
    return ExponentFit(float(res.slope), float(tq * res.stderr), win,
                       float(res.intercept), tuple(float(v) for v in x))
