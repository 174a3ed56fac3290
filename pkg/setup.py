import os

import numpy as np
from setuptools import Extension, setup

# ADVEXPLAIN_NO_EXT=1 installs the pure-Python package only.
if os.environ.get("ADVEXPLAIN_NO_EXT"):
    ext_modules = []
else:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "advexplain._kernels",
                ["src/advexplain/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
