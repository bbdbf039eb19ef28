import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("POSCARS_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("poscars._kernels", ["src/poscars/_kernels.pyx"], language="c++",
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
