import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# Set TRIPORTRAIT_PORTABLE=1 to build without host-specific instructions.
flags = ["-O3"] if os.environ.get("TRIPORTRAIT_PORTABLE") else ["-O3", "-march=native"]

ext = Extension(
    "triportrait._kernels",
    ["src/triportrait/_kernels.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    extra_compile_args=flags,
)

setup(ext_modules=cythonize([ext], language_level=3))
