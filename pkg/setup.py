"""Build script: compiles the hot-loop extension unless HERMIT_PURE_PYTHON=1.

The package works without the extension (a numpy fallback is selected at
import time), so a failed Cython/compiler setup degrades to a source-only
install instead of breaking it.
"""

import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("HERMIT_PURE_PYTHON") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "hermit._native",
                    ["src/hermit/_native.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_9_API_VERSION")],
                )
            ],
            language_level="3",
        )
    except Exception as exc:  # pragma: no cover - depends on toolchain
        print(f"hermit: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
