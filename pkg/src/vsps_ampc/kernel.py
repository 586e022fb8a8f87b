"""Backend selection for the plant integrator.

The compiled extension is used when it imports; otherwise the pure-Python twin
takes over.  Set ``VSPS_AMPC_KERNEL=python`` to force the fallback.
"""

import os

from . import _kernel_py

BACKEND = "python"
_integrate = _kernel_py.integrate

if os.environ.get("VSPS_AMPC_KERNEL", "").lower() != "python":
    try:
        from . import _kernel as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        _integrate = _compiled.integrate


def integrate(x, u, d, gp, sync, units, dt, nsteps, record_every, out, rec_start, backend=None):
    """Dispatch to the selected backend; ``backend`` overrides the default."""
    if backend is None:
        fn = _integrate
    elif backend == "python":
        fn = _kernel_py.integrate
    elif backend == "cython":
        from . import _kernel
        fn = _kernel.integrate
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return fn(x, u, d, gp, sync, units, dt, nsteps, record_every, out, rec_start)
