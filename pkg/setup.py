import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; sqfn.backend falls back to numpy
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("SQFN_NO_EXT") != "1":
    ext_modules = cythonize(
        [
            Extension(
                "sqfn._core",
                ["src/sqfn/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
