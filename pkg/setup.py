import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled kernels are an optional speedup; the package falls back to the
# numpy implementation when the extension is unavailable.
ext = Extension(
    "ctxnas.numkit._ckernels",
    ["src/ctxnas/numkit/_ckernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)
ext.optional = True

setup(ext_modules=cythonize([ext], language_level="3"))
