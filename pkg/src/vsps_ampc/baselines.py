"""Comparison controllers: fixed-speed governor and virtual inertia control.

``FspsGovernor`` drives the guide vanes of synchronous units from the grid
frequency with a permanent/transient droop governor.  ``VicController``
adds a filtered-derivative (virtual inertia) plus droop term to the power
command of variable-speed units; the guide vanes follow a feedforward
optimal-gate command and a PI speed governor that steers the rotor toward
its optimal speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .vsps_model import HillChart, VspsUnitParams, optimal_speed


def _lag_coeff(dt, T):
    return 1.0 - math.exp(-dt / T) if T > 0.0 else 1.0


# -- fixed speed -------------------------------------------------------------

@dataclass(frozen=True)
class GovernorConfig:
    """Hydro governor with transient droop.

    Transfer from ``-dw`` to gate increment is
    ``(1 + s*T_R) / (R_p * (1 + s*T_R*R_t/R_p))``: gain ``1/R_t`` right after a
    step, ``1/R_p`` in steady state.  Defaults follow the classic stable
    tuning for a unit with ``T_w = 1 s`` and ``T_M = 2H = 8 s``.
    """

    R_p: float = 0.05
    R_t: float = 0.2875
    T_R: float = 5.0
    dt: float = 0.01

    def __post_init__(self):
        if min(self.R_p, self.R_t, self.T_R, self.dt) <= 0.0:
            raise ValueError("governor parameters must be positive")


class FspsGovernor:
    """Guide-vane governor of fixed-speed units, one per unit."""

    def __init__(self, G0: Sequence[float], P_set: Sequence[float], cfg: GovernorConfig = GovernorConfig(),
                 G_min=0.0):
        self.cfg = cfg
        self.dt = cfg.dt
        self.G0 = np.asarray(G0, dtype=float)
        self.P_set = np.asarray(P_set, dtype=float)
        self.G_min = G_min
        self.z = np.zeros(len(self.G0))
        self._a = _lag_coeff(cfg.dt, cfg.T_R * cfg.R_t / cfg.R_p)

    def command(self, meas):
        c = self.cfg
        e = -float(meas["dw"])
        self.z += self._a * (e - self.z)
        y = e / c.R_t + (1.0 / c.R_p - 1.0 / c.R_t) * self.z
        G = np.clip(self.G0 + y, self.G_min, 1.0)
        return self.P_set.copy(), G


# -- virtual inertia ---------------------------------------------------------

@dataclass(frozen=True)
class VicConfig:
    """VIC and speed-governor settings.

    ``K_in`` (pu power per pu/s of frequency slope) and ``K_dr`` (pu power per
    pu frequency) are on the unit rating.  ``T_f`` is the washout of the
    derivative path, ``T_ff`` the lag on the optimal-gate feedforward and
    ``K_p``/``K_i`` the speed-governor PI gains.
    """

    K_in: float = 0.0
    K_dr: float = 8.75
    T_f: float = 0.1
    T_ff: float = 3.0
    K_p: float = 1.0
    K_i: float = 0.2
    speed_margin: float = 0.05
    K_guard: float = 5.0
    dt: float = 0.001

    def __post_init__(self):
        for name in ("K_in", "K_dr", "K_p", "K_i", "speed_margin", "K_guard"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.T_f <= 0.0 or self.T_ff <= 0.0 or self.dt <= 0.0:
            raise ValueError("time constants must be positive")


class WashoutDerivative:
    """Discrete ``s/(1 + s*T_f)`` applied to a sampled signal.

    The signal is taken as piecewise linear between samples, which makes the
    filter exact for ramps (a ramp of slope ``a`` settles to ``a``); a step
    is seen as a one-sample ramp, accurate to ``dt/(2*T_f)``.
    """

    def __init__(self, T_f, dt, x0=0.0):
        self.T_f = T_f
        self.dt = dt
        self.a = math.exp(-dt / T_f)
        self.prev = x0
        self.y = 0.0

    def __call__(self, x):
        dx = (x - self.prev) / self.dt
        self.prev = x
        self.y = self.a * self.y + (1.0 - self.a) * dx
        return self.y


def vic_command(dw_history, cfg: VicConfig, dt):
    """VIC power-command increment after the last sample of ``dw_history``."""
    h = np.asarray(dw_history, dtype=float)
    if h.size < 2:
        raise ValueError("need at least two samples")
    f = WashoutDerivative(cfg.T_f, dt, x0=h[0])
    d = 0.0
    for v in h[1:]:
        d = f(v)
    return -cfg.K_in * d - cfg.K_dr * h[-1]


def power_rating(omega_PCC, omega_r, params: VspsUnitParams, U_s=1.0):
    """Largest ``P_e`` allowed by the stator and rotor current ratings at ``Q = 0``."""
    p_stator = params.I_sN * U_s * omega_r
    i_rq = U_s / (params.L_m * omega_PCC)
    i_rd_max = math.sqrt(max(params.I_rN ** 2 - i_rq ** 2, 0.0))
    p_rotor = params.L_m * U_s * omega_r / (params.L_s * omega_PCC) * i_rd_max
    return min(p_stator, p_rotor)


class VicController:
    """VIC plus droop on the power command, optimizer plus PI on the vanes."""

    def __init__(self, units: Sequence[VspsUnitParams], chart: HillChart, P_set, G0, cfg: VicConfig = VicConfig()):
        self.units = list(units)
        self.chart = chart
        self.cfg = cfg
        self.dt = cfg.dt
        self.P_set = np.asarray(P_set, dtype=float)
        n = len(self.units)
        self.deriv = WashoutDerivative(cfg.T_f, cfg.dt)
        self.G_ff = np.asarray(G0, dtype=float).copy()
        self.integ = np.zeros(n)
        self._a_ff = _lag_coeff(cfg.dt, cfg.T_ff)

    def command(self, meas):
        import warnings

        c = self.cfg
        dw = float(meas["dw"])
        slope = self.deriv(dw)
        dP = -c.K_in * slope - c.K_dr * dw
        n = len(self.units)
        P = np.empty(n)
        G = np.empty(n)
        for i, p in enumerate(self.units):
            wr = float(meas["omega_r"][i])
            floor = p.omega_r_min + c.speed_margin
            lim = power_rating(1.0 + dw, wr, p)
            guard = float(meas["P_m"][i]) + c.K_guard * (wr - floor)
            P[i] = min(max(self.P_set[i] + dP, 0.0), lim, max(guard, 0.0))
            h = float(meas["h"][i])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                w_star = optimal_speed(P[i], h, self.chart, floor, p.omega_r_max, clamp=True)
                g_ref = self.chart.optimal_gate(P[i], h, clamp=True)
            self.G_ff[i] += self._a_ff * (g_ref - self.G_ff[i])
            err = w_star - wr
            g = self.G_ff[i] + c.K_p * err + c.K_i * self.integ[i]
            lo = p.G_min
            if lo < g < 1.0 or (g >= 1.0 and err < 0.0) or (g <= lo and err > 0.0):
                self.integ[i] += err * c.dt
            G[i] = min(max(g, lo), 1.0)
        return P, G


# -- gain tuning -------------------------------------------------------------

def vic_objective(cfg, K_in, K_dr, tol=1e-6):
    """``|nadir|`` of the VIC run with the given gains, ``inf`` when infeasible.

    A run is infeasible when it aborts on a speed bound or any trajectory
    exceeds a rotor-current, stator-current or rotor-voltage rating.
    """
    from .errors import VspsError
    from .scenario import run_scenario

    keep = {"dt_ctrl": cfg.sim.dt_ctrl} if cfg.mode == "vic" else {}
    try:
        run_cfg = cfg.with_controller("vic", vic={"K_in": float(K_in), "K_dr": float(K_dr)}, **keep)
        res = run_scenario(run_cfg)
    except (VspsError, ValueError):
        return math.inf
    for u in res.metrics["units"]:
        if max(u["I_r_ratio_max"], u["I_s_ratio_max"], u["U_r_ratio_max"]) > 1.0 + tol:
            return math.inf
    return abs(res.metrics["nadir"])


def tune_vic(cfg, bounds=((0.0, 20.0), (0.0, 40.0)), K0=None, eps=0.25, mesh0=None, map_fn=map):
    """Pattern search over ``(K_in, K_dr)`` minimizing ``|nadir|``.

    ``K0`` defaults to the lower corner of ``bounds``.  Returns the
    :class:`tuner.SearchResult`; raises :class:`errors.NoFeasiblePoint` when
    every evaluated gain pair is infeasible.
    """
    from .errors import NoFeasiblePoint
    from .tuner import PatternSearchConfig, pattern_search

    lo = tuple(float(b[0]) for b in bounds)
    hi = tuple(float(b[1]) for b in bounds)
    if len(lo) != 2 or any(a < 0.0 or b < a for a, b in zip(lo, hi)):
        raise ValueError("bounds must be two non-negative (low, high) pairs")
    K0 = lo if K0 is None else tuple(float(v) for v in K0)
    width = [max(b - a, 1e-9) for a, b in zip(lo, hi)]
    span = max(width)
    search = PatternSearchConfig(K0=K0, lower=lo, upper=hi, eps=eps / span, mesh0=0.25 if mesh0 is None else mesh0,
                                 scale=(span, span))
    res = pattern_search(search, lambda K: vic_objective(cfg, K[0], K[1]), map_fn=map_fn)
    if not math.isfinite(res.f):
        raise NoFeasiblePoint("no gain pair inside the bounds satisfies the operating limits")
    return res
