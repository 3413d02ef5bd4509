"""Build script for the compiled kernel core.

The extension is optional: if it fails to build (no compiler, no Cython),
the package still works through the pure-numpy kernel lane. Build in place
for development with:

    python setup.py build_ext --inplace
"""

import numpy as np
from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "rwkvsr.kernels._core",
                sources=["src/rwkvsr/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off keeps float64 accumulation bit-identical
                # to the numpy lane (no FMA contraction).
                extra_compile_args=["-O3", "-march=native", "-ffp-contract=off", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
