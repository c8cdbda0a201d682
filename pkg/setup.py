import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("PREFIXCHAIN_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "prefixchain.pow._powkernel",
                    ["src/prefixchain/pow/_powkernel.pyx"],
                    libraries=["crypto"],
                    extra_compile_args=["-O3", "-Wno-deprecated-declarations"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
