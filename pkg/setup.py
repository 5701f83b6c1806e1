import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "wke._core",
    ["src/wke/_core.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-fopenmp"],
    extra_link_args=["-fopenmp"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
