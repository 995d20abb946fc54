from setuptools import Extension, setup
from Cython.Build import cythonize
import numpy

ext = Extension(
    "mcmforge.sim._kernels",
    ["src/mcmforge/sim/_kernels.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}))
