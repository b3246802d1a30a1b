"""Build script for the optional compiled kernels.

The extension is marked optional: when Cython or a C compiler is missing the
package installs without it and ``flpricing.kernels`` falls back to the
pure-Python implementations.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "flpricing._kernels",
                ["src/flpricing/_kernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
