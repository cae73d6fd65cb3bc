import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "ctrisk._kernels",
                ["src/ctrisk/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps the compiled path bit-identical
                # to the pure-Python fallback (no FMA reassociation)
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
