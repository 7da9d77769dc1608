import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: without Cython (or a C compiler) the
# package falls back to the numpy implementations selected at import time.
try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    directives = {
        "language_level": "3",
        "boundscheck": False,
        "wraparound": False,
        "cdivision": True,
    }
    ext = Extension(
        "rigidflow._kernels._native",
        ["src/rigidflow/_kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], compiler_directives=directives)

setup(ext_modules=ext_modules)
