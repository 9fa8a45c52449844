"""Build script for the optional compiled simulation kernel.

The package works without the extension (a pure-Python kernel is selected at
import time); the extension only speeds up the sequential trial loop.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "nof1trial._kernels._native",
                ["src/nof1trial/_kernels/_native.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
else:
    extensions = []

setup(ext_modules=extensions)
