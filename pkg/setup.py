"""Build script: compiles the interval-evaluation kernel when Cython and a C
compiler are available.  The package works without it (pure-Python fallback in
pmcverify._kernel), so any failure here downgrades to a source-only install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "pmcverify._kernel._ckernel",
                ["src/pmcverify/_kernel/_ckernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - depends on build host
    print(f"warning: compiled kernel disabled ({exc}); using pure-Python fallback")

setup(ext_modules=ext_modules)
