import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ECGDENOISE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext = Extension(
            "ecgdenoise.tiramisu._corekern",
            ["src/ecgdenoise/tiramisu/_corekern.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        # No Cython/numpy at build time: install pure-Python; the numpy
        # kernel backend is selected automatically at import.
        ext_modules = []

setup(ext_modules=ext_modules)
