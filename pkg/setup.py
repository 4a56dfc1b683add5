import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

omp = [] if os.environ.get("NPMLE_NO_OPENMP") else ["-fopenmp"]

extensions = [
    Extension(
        "npmle._ckernels",
        ["src/npmle/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"] + omp,
        extra_link_args=omp,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
