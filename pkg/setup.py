"""Build hook: compiles the optional coordinate-sweep extension.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here downgrades to a pure-Python install.
Set OMNISURF_NO_EXT=1 to skip the compile step entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("OMNISURF_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/omnisurf/_kernels/_sweep_cy.pyx"],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
