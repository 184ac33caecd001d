import os

from setuptools import Extension, setup


def _extensions():
    source = "src/stochinv/sim/_kernel.pyx"
    if os.environ.get("STOCHINV_PURE_PYTHON") or not os.path.exists(source):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "stochinv.sim._kernel",
        [source],
        include_dirs=[np.get_include()],
        # no FMA contraction: the kernel must round exactly like the Python one
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
