"""Build the optional Cython core; the package falls back to numpy without it."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("PIPSCREEN_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "pipscreen._core",
                    ["src/pipscreen/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
