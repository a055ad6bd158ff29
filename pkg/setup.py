"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (pure-Python fallback in
cmcheck._kernels.pure); the extension only accelerates the hot box-search
loops.  Build in place with:

    python setup.py build_ext --inplace
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/cmcheck/_kernels/_core.pyx"],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
