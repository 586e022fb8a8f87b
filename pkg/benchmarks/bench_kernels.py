"""Wall-clock comparison of the compiled and pure-Python plant integrators.

Runs the shipped fixed-speed scenario (cheapest controller, so the integrator
dominates) open loop through both backends and checks that the traces agree.

    python3 benchmarks/bench_kernels.py [--seconds 12] [--repeat 3]
"""

import argparse
import time

import numpy as np

from vsps_ampc import kernel
from vsps_ampc.scenario import build_plant, load_config, shipped_config_path


def run(cfg, backend, seconds):
    plant = build_plant(cfg)
    plant.backend = backend
    nsteps = int(round(seconds / cfg.sim.dt))
    out = np.zeros((nsteps // cfg.sim.record_every + 1, plant.nrec_cols))
    t0 = time.perf_counter()
    plant.advance(nsteps, out, 0)
    return time.perf_counter() - t0, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seconds", type=float, default=12.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cfg = load_config(shipped_config_path("fsps"))
    backends = ["python"] + (["cython"] if kernel.BACKEND == "cython" else [])
    best = {}
    traces = {}
    for b in backends:
        times = []
        for _ in range(args.repeat):
            dt, out = run(cfg, b, args.seconds)
            times.append(dt)
        best[b] = min(times)
        traces[b] = out
        steps = args.seconds / cfg.sim.dt
        print(f"{b:>7}: {best[b]:.3f} s for {steps:.0f} steps ({1e6 * best[b] / steps:.2f} us/step)")
    if "cython" in best:
        diff = np.max(np.abs(traces["cython"] - traces["python"]))
        print(f"speedup {best['python'] / best['cython']:.1f}x, max trace difference {diff:.3e}")
    else:
        print("compiled kernel not available; only the Python backend was timed")


if __name__ == "__main__":
    main()
