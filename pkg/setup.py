"""Build script for the optional compiled gradient kernel.

The package works without the extension: nnmf._kernels falls back to the
pure-NumPy implementation when the compiled module is missing.  The
Extension is therefore marked optional so installation never fails on a
machine without a C toolchain.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # no build toolchain: install pure-Python only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "nnmf._kernels._core",
                ["src/nnmf/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
