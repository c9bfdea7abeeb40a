import glob

from pybind11.setup_helpers import ParallelCompile, Pybind11Extension, build_ext
from setuptools import setup

ParallelCompile("NPY_NUM_BUILD_JOBS").install()

ext = Pybind11Extension(
    "attrxfer._core",
    sorted(glob.glob("src/*.cpp")) + ["bindings/pymodule.cpp"],
    include_dirs=["include"],
    cxx_std=20,
)

setup(
    package_dir={"": "python"},
    packages=["attrxfer"],
    ext_modules=[ext],
    cmdclass={"build_ext": build_ext},
)
