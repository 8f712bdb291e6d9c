"""Builds the optional compiled kernel core.

The package is fully functional without it (numpy fallback is selected at
import time); the extension only accelerates the per-tick inner loops.
Compile failures are therefore non-fatal: setuptools marks the extension
optional and the install proceeds pure-Python.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "failop.kernels._core",
        sources=["src/failop/kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off keeps float results bit-identical to the
        # numpy fallback (no fused multiply-add surprises).
        extra_compile_args=["-O2", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
