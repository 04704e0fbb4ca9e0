from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension("ostd._sais", ["src/ostd/_sais.pyx"]),
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
