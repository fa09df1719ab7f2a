"""Builds the optional Cython extension for the hot Green-symbol kernels.

The package works without the extension (a pure-numpy implementation is
selected at import time); building it just speeds up the per-mode symbol
evaluation.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "cnsplab._green_cy",
                sources=["src/cnsplab/_green_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
