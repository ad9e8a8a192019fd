"""Build script for the compiled DP kernels.

The extension is optional: if it fails to compile, the package falls back to
the numpy implementation in ``gpslab._fallback`` at import time.
"""
import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("GPSLAB_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "gpslab._core",
                ["src/gpslab/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
