"""Build the optional compiled kernels.

The package works without them: ``rotorkit.kernels`` falls back to the
pure-Python implementations when the extension cannot be imported.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ROTORKIT_NO_EXT", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "rotorkit._ckernels",
                    ["src/rotorkit/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
