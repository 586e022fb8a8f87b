"""Aggregated single-bus frequency model of the surrounding power system.

The grid is a center-of-inertia swing equation on a 100 MVA base::

    2*H*d(dw)/dt = sum(dP_gen) - dP_load - D*dw

fed by droop-governed synchronous units (governor lag followed by a turbine
lag), a droop-controlled battery with a short response lag, and any power
injections from the pumped-storage plant.  Converter-interfaced renewables run
at maximum power point and contribute no frequency response.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernel
from .errors import EmptyTrace


@dataclass(frozen=True)
class SyncUnit:
    S: float  # MVA
    delta: float = 0.05
    T_gov: float = 0.2
    T_turb: float = 7.0

    def __post_init__(self):
        if self.S <= 0.0 or self.delta <= 0.0 or self.T_gov <= 0.0 or self.T_turb <= 0.0:
            raise ValueError("synchronous unit parameters must be positive")


@dataclass(frozen=True)
class Battery:
    S: float = 100.0  # MVA, also the output limit
    delta: float = 0.02
    T: float = 0.05

    def __post_init__(self):
        if self.S < 0.0 or self.delta <= 0.0 or self.T <= 0.0:
            raise ValueError("battery droop and lag must be positive")


@dataclass(frozen=True)
class GridParams:
    H_sys: float = 54.39
    D_sys: float = 0.2
    sync_units: tuple = (SyncUnit(1500.0),)
    battery: Battery = field(default_factory=Battery)
    F_sys: float | None = None
    S_base: float = 100.0
    converter_mw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sync_units", tuple(self.sync_units))
        if self.H_sys <= 0.0:
            raise ValueError("H_sys must be positive")
        if self.D_sys < 0.0:
            raise ValueError("D_sys must be non-negative")
        if self.F_sys is None:
            object.__setattr__(self, "F_sys", self.D_sys)
        if self.F_sys < 0.0:
            raise ValueError("F_sys must be non-negative")

    def sync_gains(self):
        """Droop gains ``S_j / (delta_j * S_base)`` in pu power per pu speed."""
        return np.array([u.S / (u.delta * self.S_base) for u in self.sync_units])

    def battery_gain(self):
        return self.battery.S / (self.battery.delta * self.S_base)

    def participants(self):
        """``(S_j, delta_j)`` pairs (S in pu of ``S_base``) of every droop source."""
        out = [(u.S / self.S_base, u.delta) for u in self.sync_units]
        if self.battery.S > 0.0:
            out.append((self.battery.S / self.S_base, self.battery.delta))
        return out

    def packed(self, H_extra=0.0):
        gp_grid = [
            self.H_sys + H_extra,
            self.D_sys,
            self.battery_gain(),
            self.battery.S / self.S_base,
            self.battery.T,
        ]
        sync = np.array([[k, u.T_gov, u.T_turb] for k, u in zip(self.sync_gains(), self.sync_units)],
                        dtype=float).reshape(-1, 3)
        return gp_grid, sync


@dataclass(frozen=True)
class Disturbance:
    """Step changes of load, ``(time_s, dP_load_pu)``; steps accumulate."""

    events: tuple = ()

    def __post_init__(self):
        ev = tuple((float(t), float(p)) for t, p in self.events)
        object.__setattr__(self, "events", ev)
        times = [t for t, _ in ev]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("disturbance times must be strictly increasing")

    def value_at(self, t):
        total = 0.0
        for te, p in self.events:
            if te <= t:
                total += p
        return total

    def next_event_after(self, t):
        for te, _ in self.events:
            if te > t:
                return te
        return None


@dataclass
class GridState:
    dw: float = 0.0
    pb: float = 0.0
    gov: np.ndarray = None

    def as_vector(self, m):
        gov = np.zeros(2 * m) if self.gov is None else np.asarray(self.gov, dtype=float)
        return np.concatenate([[self.dw, self.pb], gov])


def grid_rhs(state: GridState, params: GridParams, P_injection, dP_load):
    """Time derivative of the grid states; the first entry is the swing equation."""
    m = len(params.sync_units)
    x = state.as_vector(m)
    gp_grid, sync = params.packed()
    dx = np.zeros_like(x)
    gen = x[1] + sum(x[3::2]) + float(np.sum(P_injection))
    dx[0] = (gen - dP_load - params.D_sys * x[0]) / (2.0 * params.H_sys)
    target = np.clip(-params.battery_gain() * x[0], -gp_grid[3], gp_grid[3])
    dx[1] = (target - x[1]) / params.battery.T
    for k in range(m):
        dx[2 + 2 * k] = (-sync[k, 0] * x[0] - x[2 + 2 * k]) / sync[k, 1]
        dx[3 + 2 * k] = (x[2 + 2 * k] - x[3 + 2 * k]) / sync[k, 2]
    return dx


def power_balance_residual(state: GridState, params: GridParams, P_injection, dP_load):
    """``2H*d(dw)/dt - (generation - load - damping)``; zero by construction."""
    m = len(params.sync_units)
    x = state.as_vector(m)
    dx = grid_rhs(state, params, P_injection, dP_load)
    gen = x[1] + sum(x[3::2]) + float(np.sum(P_injection))
    return 2.0 * params.H_sys * dx[0] - (gen - dP_load - params.D_sys * x[0])


def step_grid(state: GridState, params: GridParams, P_injections, disturbance, dt, t=0.0, backend=None):
    """Advance the grid alone by one RK4 step with injections held constant.

    ``P_injections`` are power increments on the grid base from sources outside
    the grid model (e.g. the pumped-storage plant).  ``disturbance`` is either a
    :class:`Disturbance` evaluated at ``t`` or a load increment in pu.
    """
    if dt <= 0.0 or dt > 0.01:
        raise ValueError("dt must lie in (0, 10 ms]")
    m = len(params.sync_units)
    x = np.array(state.as_vector(m), dtype=float)
    d = disturbance.value_at(t) if isinstance(disturbance, Disturbance) else float(disturbance)
    d -= float(np.sum(P_injections))
    gp_grid, sync = params.packed()
    # chart/tunnel slots are unused without units
    gp = np.array(gp_grid + [0.0, 0.0, 1.0, 0.9, 2.0, 0.1, 0.8, 0.8, 0.25, 1.0])
    out = np.zeros((1, len(x) + 1))
    kernel.integrate(x, np.zeros(0), d, gp, sync, np.zeros((0, 12)), dt, 1, 1, out, 0, backend=backend)
    return GridState(dw=float(x[0]), pb=float(x[1]), gov=x[2:].copy())


def nadir_metrics(t, dw):
    """Frequency-response metrics of a ``(time, dw)`` trace.

    Returns a dict with the signed extremal deviation ``nadir`` and its time,
    the signed steepest slope ``rocof_max``, and ``settling_band_entry``: the
    first time after which the deviation stays within 10% of ``|nadir|`` of
    its final value.
    """
    t = np.asarray(t, dtype=float)
    dw = np.asarray(dw, dtype=float)
    if t.size == 0 or dw.size == 0:
        raise EmptyTrace("empty frequency trace")
    if t.shape != dw.shape:
        raise ValueError("time and deviation series differ in length")
    k = int(np.argmax(np.abs(dw)))
    nadir = float(dw[k])
    if t.size > 1:
        slope = np.diff(dw) / np.diff(t)
        j = int(np.argmax(np.abs(slope)))
        rocof = float(slope[j])
    else:
        rocof = 0.0
    band = 0.1 * abs(nadir)
    outside = np.nonzero(np.abs(dw - dw[-1]) > band)[0]
    if outside.size == 0:
        settle = float(t[0])
    elif outside[-1] + 1 < t.size:
        settle = float(t[outside[-1] + 1])
    else:
        settle = float(t[-1])
    return {"nadir": nadir, "t_nadir": float(t[k]), "rocof_max": rocof, "settling_band_entry": settle}
