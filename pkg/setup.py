"""Build the optional Cython kernels.

The package runs without them (pure numpy fallback), so a failed compile
is reported and skipped instead of aborting the install.
"""
import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback", file=sys.stderr)


def extensions():
    if os.environ.get("BARGAIN_LAB_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "bargain_lab._kernels._ckernels",
        ["src/bargain_lab/_kernels/_ckernels.pyx"],
        extra_compile_args=["-O3"],
    )
    try:
        return _cythonize(cythonize, ext)
    except Exception as exc:
        print(f"warning: cythonize failed ({exc}); using numpy fallback", file=sys.stderr)
        return []


def _cythonize(cythonize, ext):
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
