import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        out_dir = Path(self.get_ext_fullpath(ext.name)).resolve().parent
        out_dir.mkdir(parents=True, exist_ok=True)

        cfg_args = [
            f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={out_dir}",
            f"-DPYTHON_EXECUTABLE={sys.executable}",
            "-DVCT_PYTHON=ON",
            "-DCMAKE_BUILD_TYPE=Release",
        ]
        env_native = os.environ.get("VCT_NATIVE")
        if env_native is not None:
            cfg_args.append(f"-DVCT_NATIVE={env_native}")

        subprocess.run(["cmake", str(source_dir), *cfg_args], cwd=build_dir, check=True)
        subprocess.run(
            ["cmake", "--build", ".", "--target", "_core", "-j"], cwd=build_dir, check=True
        )


setup(
    ext_modules=[CMakeExtension("vct._core")],
    cmdclass={"build_ext": CMakeBuild},
)
