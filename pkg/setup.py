"""Build script: compiles the optional simulation kernel.

The package works without the extension (a pure-Python backend is selected
at import time); the kernel only accelerates the per-round simulation loop.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "datamkt.learning._simcore",
                ["src/datamkt/learning/_simcore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write(f"datamkt: skipping compiled kernel ({exc}); "
                     "pure-Python backend will be used\n")

setup(ext_modules=ext_modules)
