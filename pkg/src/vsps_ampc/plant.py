"""Truth plant: pumped-storage units on a shared tunnel coupled to the grid.

:class:`Plant` owns the full state vector and drives the integrator backend in
chunks between controller calls and disturbance events.  Units are either
variable speed (``"vs"``: DFIM, electrical power follows ``P*`` through a lag,
own rotor swing) or fixed speed (``"fs"``: synchronous machine whose rotor is
locked to grid frequency and whose inertia joins the system inertia).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernel
from .errors import SpeedBoundViolation
from .grid_model import Disturbance, GridParams
from .vsps_model import (
    SPEED_ABORT_MARGIN,
    HillChart,
    TunnelParams,
    VspsState,
    VspsUnitParams,
    steady_state,
)


@dataclass(frozen=True)
class UnitSpec:
    params: VspsUnitParams
    P_set: float
    mode: str = "vs"

    def __post_init__(self):
        if self.mode not in ("vs", "fs"):
            raise ValueError(f"unit mode must be 'vs' or 'fs', got {self.mode!r}")


class Plant:
    """Deterministic co-simulation of grid and pumped-storage units.

    Parameters
    ----------
    grid : GridParams
    units : sequence of UnitSpec
    chart : HillChart
    tunnel : TunnelParams
    disturbance : Disturbance
    dt : float
        Truth integration step (s).
    record_every : int
        Number of truth steps between recorded trace rows.
    """

    def __init__(self, grid: GridParams, units: Sequence[UnitSpec], chart: HillChart, tunnel: TunnelParams,
                 disturbance: Disturbance = Disturbance(), dt=1e-3, record_every=10, backend=None):
        if dt <= 0.0 or dt > 0.01:
            raise ValueError("truth step must lie in (0, 10 ms]")
        self.grid = grid
        self.units = list(units)
        self.chart = chart
        self.tunnel = tunnel
        self.disturbance = disturbance
        self.dt = float(dt)
        self.record_every = int(record_every)
        self.backend = backend
        self.n = len(self.units)
        self.m = len(grid.sync_units)
        self.base = 2 + 2 * self.m

        params = [u.params for u in self.units]
        speeds = [None if u.mode == "vs" else 1.0 for u in self.units]
        w, G, q, h = steady_state([u.P_set for u in self.units], params, chart, tunnel, speeds=speeds)
        self.initial = {"omega_r": w, "G": G, "q": q, "h": h}

        H_extra = sum(u.params.H_unit * u.params.S_unit / grid.S_base for u in self.units if u.mode == "fs")
        gp_grid, self.sync = grid.packed(H_extra=H_extra)
        self.H_total = gp_grid[0]
        self.gp = np.array(gp_grid + [tunnel.T_wc, tunnel.f_c, tunnel.h_static] + list(chart.coefficients.as_tuple()))
        rows = []
        for u in self.units:
            p = u.params
            rows.append([
                0.0 if u.mode == "vs" else 1.0,
                p.S_unit / grid.S_base,
                p.H_unit, p.T_p, p.T_g, p.G_rate_max, p.T_w, p.f_p, p.G_min,
                u.P_set,
                p.omega_r_min - SPEED_ABORT_MARGIN,
                p.omega_r_max + SPEED_ABORT_MARGIN,
            ])
        self.unit_rows = np.array(rows, dtype=float).reshape(-1, 12)

        x = np.zeros(self.base + 4 * self.n)
        for i, u in enumerate(self.units):
            j = self.base + 4 * i
            x[j] = w[i]
            x[j + 1] = u.P_set
            x[j + 2] = G[i]
            x[j + 3] = q[i]
        self.x = x
        self.u = np.array([v for i, u in enumerate(self.units) for v in (u.P_set, G[i])], dtype=float)
        self.t = 0.0
        self.step_count = 0
        self.clamp_steps = 0
        self.nrec_cols = len(x) + 2 * self.n + 1

    # -- state access ---------------------------------------------------------

    @property
    def nx(self):
        return len(self.x)

    @property
    def dw(self):
        return float(self.x[0])

    def unit_slice(self, i):
        j = self.base + 4 * i
        return self.x[j:j + 4]

    def rhs(self, x=None, u=None, d=None):
        """Evaluate ``(dx/dt, P_m, h)`` at a state with the Python twin."""
        from ._kernel_py import _rhs

        x = self.x if x is None else x
        u = self.u if u is None else u
        d = self.disturbance.value_at(self.t) if d is None else d
        dx = [0.0] * len(x)
        pm = [0.0] * self.n
        hh = [0.0] * self.n
        _rhs([float(v) for v in x], [float(v) for v in u], float(d), list(map(float, self.gp)),
             self.sync.tolist(), self.unit_rows.tolist(), dx, pm, hh)
        return np.array(dx), np.array(pm), np.array(hh)

    def unit_states(self):
        _, pm, hh = self.rhs()
        out = []
        for i, spec in enumerate(self.units):
            wr, pe, G, q = self.unit_slice(i)
            if spec.mode == "fs":
                wr = 1.0 + self.dw
                pe = pm[i]
            out.append(VspsState(omega_r=float(wr), P_e=float(pe), P_m=float(pm[i]), G=float(G), q=float(q),
                                 h=float(hh[i])))
        return out

    def measurements(self):
        """Signals a plant controller can see: grid deviation and per-unit w_r, P_e, G."""
        states = self.unit_states()
        return {
            "t": self.t,
            "dw": self.dw,
            "omega_r": np.array([s.omega_r for s in states]),
            "P_e": np.array([s.P_e for s in states]),
            "G": np.array([s.G for s in states]),
            "P_m": np.array([s.P_m for s in states]),
            "h": np.array([s.h for s in states]),
        }

    def set_inputs(self, P_star, G_star):
        u = self.u.copy()
        for i in range(self.n):
            if P_star is not None:
                u[2 * i] = P_star[i]
            if G_star is not None:
                u[2 * i + 1] = G_star[i]
        self.u = u

    def clone(self):
        return copy.deepcopy(self)

    # -- integration -----------------------------------------------------------

    def steps_until(self, t_end):
        return int(round((t_end - self.t) / self.dt))

    def advance(self, nsteps, out=None, rec_start=0):
        """Integrate ``nsteps`` truth steps with the current inputs held.

        Disturbance events split the run so each piece sees a constant load.
        Rows are recorded into ``out`` every ``record_every`` steps counted on
        the global step counter.  Returns the number of rows written.
        """
        R = self.record_every
        rows_total = 0
        scratch = np.zeros((1, self.nrec_cols))
        remaining = int(nsteps)
        while remaining > 0:
            limit = remaining
            nxt = self.disturbance.next_event_after(self.t + 0.5 * self.dt)
            if nxt is not None:
                to_event = int(round((nxt - self.t) / self.dt))
                if 0 < to_event < limit:
                    limit = to_event
            phase = self.step_count % R
            if phase == 0 and limit >= R:
                chunk = (limit // R) * R
                every = R
            else:
                chunk = min(limit, R - phase)
                every = chunk if chunk == R - phase else chunk + 1
            if out is None:
                dest, start, every = scratch, 0, chunk + 1
            else:
                dest, start = out, rec_start + rows_total
            d = self.disturbance.value_at(self.t + 0.5 * self.dt)
            status, done, rows, clamps = kernel.integrate(
                self.x, self.u, d, self.gp, self.sync, self.unit_rows, self.dt, chunk, every,
                dest, start, backend=self.backend)
            self.step_count += done
            self.t = self.step_count * self.dt
            self.clamp_steps += clamps
            rows_total += rows
            remaining -= done
            if status != 0:
                bad = self._speed_violator()
                raise SpeedBoundViolation(
                    f"unit {bad} rotor speed left the abort band at t={self.t:.3f} s", time=self.t, unit=bad)
        return rows_total

    def _speed_violator(self):
        for i, spec in enumerate(self.units):
            wr = self.unit_slice(i)[0]
            if spec.mode == "vs" and not (self.unit_rows[i, 10] <= wr <= self.unit_rows[i, 11]):
                return i
        return None

    def record_row(self):
        """Trace row for the current state in the backend layout."""
        dx, pm, hh = self.rhs()
        return np.concatenate([self.x, pm, hh, [dx[0]]])
