"""Backend selection for the DP kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
Setting ``GPSLAB_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
kernels = _fallback

if os.environ.get("GPSLAB_BACKEND", "").lower() != "python":
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

__all__ = ["BACKEND", "kernels"]
