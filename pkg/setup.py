"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-numpy fallback is
selected at import time), so a failed compile only costs speed.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "staircase._kernels",
                ["src/staircase/_kernels.pyx"],
                # fp-contract off: fused multiply-adds would break the
                # bit-for-bit agreement with the pure-Python backend.
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
