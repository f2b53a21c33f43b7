"""Build script: compiles the optional accelerated kernels when Cython and a
C toolchain are available.  A plain install without them still works; the
package falls back to the numpy implementation at import time."""

import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("CADEN_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "caden._accel._lbfgs",
        ["src/caden/_accel/_lbfgs.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
