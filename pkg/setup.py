"""Build script for the optional Cython convolution kernels.

The package works without the extension: ``volcast.tcn.kernels`` falls back to
a numpy implementation when ``volcast.tcn._ckernels`` cannot be imported.
Set ``VOLCAST_NO_EXT=1`` to skip compiling it, ``VOLCAST_PORTABLE=1`` to
build without ``-march=native``.
"""
import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Treat a failed compile as "no extension" instead of a failed install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: skipping Cython kernels ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc})")


def extensions():
    if os.environ.get("VOLCAST_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    # reassociation lets gcc vectorize the dot-product reductions
    flags = ["-O3", "-fno-math-errno", "-fassociative-math",
             "-fno-signed-zeros", "-fno-trapping-math"]
    if not os.environ.get("VOLCAST_PORTABLE"):
        flags.append("-march=native")
    ext = Extension(
        "volcast.tcn._ckernels",
        ["src/volcast/tcn/_ckernels.pyx"],
        extra_compile_args=flags,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
