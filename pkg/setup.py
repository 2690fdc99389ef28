"""Build script for the optional compiled numerics kernels.

The package is fully functional without the extension: ``hoso_adapter.numerics``
falls back to the numpy kernels when the compiled module is absent. Any failure
while cythonizing or compiling therefore degrades to a pure-Python install
instead of aborting.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/hoso_adapter/numerics/_kernels_cy.pyx"],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    include_dirs = [numpy.get_include()]
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"hoso-adapter: skipping compiled kernels ({exc})", file=sys.stderr)
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
