import os

from setuptools import setup

ext_modules = []
if os.environ.get("WEXCLUSION_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # pure-Python fallback is used at import time
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "wexclusion._kmc_cy",
                    ["src/wexclusion/_kmc_cy.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
