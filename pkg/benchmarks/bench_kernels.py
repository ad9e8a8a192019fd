"""Compare the compiled DP kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from gpslab import _fallback
from gpslab.kernel import build_kernel

try:
    from gpslab import _core
except ImportError:  # extension not built
    _core = None


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--alpha", type=float, default=1.5)
    args = ap.parse_args(argv)

    k = build_kernel(args.alpha)
    rng = np.random.default_rng(0)
    backends = [("python", _fallback)] + ([("cython", _core)] if _core else [])
    if _core is None:
        print("compiled extension not available; timing the fallback only")
    print(f"{'kernel':<14}{'N':>6}" + "".join(f"{name:>12}" for name, _ in backends)
          + ("   speedup" if _core else ""))
    for N in args.sizes:
        km, ke = k.scaled_values(2 * N)
        logw = 0.3 * rng.standard_normal((N + 1, N + 1))
        src = rng.random((N + 1, N + 1))
        kern = k.values(2 * N)
        for label, call in (
            ("pinned_dp", lambda mod: mod.pinned_dp(km, ke, logw)),
            ("rect_convolve", lambda mod: mod.rect_convolve(src, kern)),
        ):
            times = [_best_of(lambda: call(mod), args.repeat) for _, mod in backends]
            row = f"{label:<14}{N:>6}" + "".join(f"{t:>11.4f}s" for t in times)
            if len(times) == 2:
                row += f"{times[0] / times[1]:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
