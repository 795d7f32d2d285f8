"""Build the optional compiled kernels.

The Cython extension is best-effort: if it cannot be compiled the package
still installs and runs on the pure-numpy fallback in ``matcomp._fallback``.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("MATCOMP_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "matcomp._kernels",
                    ["src/matcomp/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"matcomp: skipping compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
