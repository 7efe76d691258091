from setuptools import setup, Extension
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the kernels if a compiler is around; otherwise fall back to pure Python."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernels not built ({exc}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc}); using pure-Python fallback")


try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("streamsky._ckernels", ["src/streamsky/_ckernels.pyx"], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3},
    )
except ImportError:
    ext_modules = []


setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
