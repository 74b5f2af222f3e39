import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# NSEXPLAIN_NO_EXT=1 skips the compiled kernels; the package then runs on the
# pure-NumPy backend selected at import time.
ext_modules = []
if cythonize is not None and not os.environ.get("NSEXPLAIN_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "nsexplain.backend._core",
                ["src/nsexplain/backend/_core.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
