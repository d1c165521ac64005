import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

_npy_random_lib = os.path.join(os.path.dirname(np.__file__), "random", "lib")

extensions = [
    Extension(
        "fwemerge._core",
        ["src/fwemerge/_core.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[_npy_random_lib],
        libraries=["npyrandom", "m"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
