"""Build script for the optional compiled kernel core.

The package works without the extension; ``volterrakit.kernels`` falls back
to the numpy implementation when ``volterrakit._core`` cannot be imported.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - Cython is a build requirement
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("volterrakit._core", ["src/volterrakit/_core.pyx"],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
