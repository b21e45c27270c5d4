"""Build script for the optional compiled spectrum kernel.

The package is pure Python plus one Cython extension used to speed up the
2D spectrum search.  If Cython or a C compiler is unavailable the build
falls through and the package transparently uses the NumPy kernel instead.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that degrades to a warning instead of failing the install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: compiled spectrum kernel not built ({exc}); "
            "falling back to the NumPy implementation",
            file=sys.stderr,
        )


def make_extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:  # pragma: no cover - toolchain dependent
        print(
            f"warning: {exc}; building without the compiled spectrum kernel",
            file=sys.stderr,
        )
        return []
    ext = Extension(
        "isactrack._spectrum_cy",
        ["src/isactrack/_spectrum_cy.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
