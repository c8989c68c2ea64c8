from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("survmediate._kernels", ["src/survmediate/_kernels.pyx"])],
        language_level=3,
    )
except ImportError:
    # Pure-Python fallback kernels are selected at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
