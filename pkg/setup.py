import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "streamadapt.kernels._hot",
                ["src/streamadapt/kernels/_hot.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # no Cython: install runs with the pure-python kernel fallback
    ext_modules = []

setup(ext_modules=ext_modules)
