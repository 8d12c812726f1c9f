import numpy
from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fracperc._kernels._speedups",
                ["src/fracperc/_kernels/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # pure-Python fallback is selected at import time, so a missing compiler
    # or Cython only costs performance
    ext_modules = []

setup(ext_modules=ext_modules)
