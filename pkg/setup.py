"""Build shim: compiles the optional Gibbs-sweep extension.

The package is fully functional without the extension (a pure-Python
kernel with the identical numerical behaviour is selected at import);
the build therefore tolerates a missing compiler or Cython.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/nmmt/_gibbs.pyx",
        language_level="3",
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )
    include_dirs = [numpy.get_include()]
except ImportError:  # pragma: no cover - build-environment dependent
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
