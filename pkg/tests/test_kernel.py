import os
import subprocess
import sys

import numpy as np
import pytest

from vsps_ampc import kernel
from vsps_ampc.scenario import build_plant, run_scenario

from conftest import variant

compiled = pytest.mark.skipif(kernel.BACKEND != "cython", reason="compiled kernel not built")


def traces(cfg, backend, n=2000):
    plant = build_plant(cfg)
    plant.backend = backend
    out = np.zeros((n // cfg.sim.record_every + 1, plant.nrec_cols))
    plant.advance(n, out, 0)
    return out, plant.x.copy()


@compiled
@pytest.mark.parametrize("mode", ["fsps", "vic"])
def test_backends_agree(shipped, mode):
    cfg = variant(shipped[mode], disturbance=[[0.2, 3.0]])
    a, xa = traces(cfg, "python")
    b, xb = traces(cfg, "cython")
    assert np.array_equal(a, b)
    assert np.array_equal(xa, xb)


@compiled
def test_closed_loop_backends_agree(shipped):
    a = run_scenario(variant(shipped["ampc"], duration=2.0, backend="python"))
    b = run_scenario(variant(shipped["ampc"], duration=2.0, backend="compiled"))
    for k in a.columns:
        assert np.array_equal(a.columns[k], b.columns[k], equal_nan=True), k


def test_env_var_forces_fallback():
    env = dict(os.environ, VSPS_AMPC_KERNEL="python")
    out = subprocess.run([sys.executable, "-c", "from vsps_ampc import kernel; print(kernel.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend(shipped):
    plant = build_plant(shipped["fsps"])
    plant.backend = "fortran"
    with pytest.raises(ValueError):
        plant.advance(10, np.zeros((2, plant.nrec_cols)), 0)
