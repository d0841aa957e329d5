"""Builds the optional compiled kernel extension.

The package works without it (pure numpy fallbacks are selected at import
time), but the compiled kernels make entropy maps, KNN queries and the
splatting inner loops fast enough for full-size rasters.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "entrosplat._kernels",
                ["src/entrosplat/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
