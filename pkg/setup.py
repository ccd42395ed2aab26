from setuptools import setup, Extension

from Cython.Build import cythonize
import numpy as np

extensions = [
    Extension(
        "groupreg._kernels",
        ["src/groupreg/_kernels.pyx"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
]

compiler_directives = {
    "language_level": 3,
    "boundscheck": False,
    "wraparound": False,
    "cdivision": True,
    "nonecheck": False,
}

setup(
    ext_modules=cythonize(extensions, compiler_directives=compiler_directives),
)
