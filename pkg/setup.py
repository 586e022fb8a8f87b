"""Build hook for the optional compiled plant kernel.

The package works without the extension; ``vsps_ampc.kernel`` falls back to
the pure-Python integrator when ``_kernel`` cannot be imported.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("VSPS_AMPC_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "vsps_ampc._kernel",
                    ["src/vsps_ampc/_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )

setup(ext_modules=ext_modules)
