"""Builds the compiled renderer kernel.

The extension is optional: if it fails to build or import, the package
falls back to the numpy backend with byte-identical output.  Floating
point contraction is disabled so both backends round identically.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "faceproj.kernels._fast",
        ["src/faceproj/kernels/_fast.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
