"""Nonlinear truth model of a variable-speed pumped-storage plant.

All quantities are per unit on the unit's own rating unless noted.  The stator
voltage is held at ``U_S = 1.0`` and the 3/2 amplitude factors of the SI form of
the machine equations collapse to one in this convention.

The unit model is deliberately electromechanical: the machine electromagnetics
enter only through the algebraic current/voltage relations used to check
operating limits, while the electrical power follows its command through a
first-order lag of time constant ``T_p``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import NonPhysical, OutOfChart, SpeedBoundViolation

U_S = 1.0
SPEED_ABORT_MARGIN = 0.05


class ClampWarning(UserWarning):
    """A guide-vane command was slew-limited by the servo."""


@dataclass(frozen=True)
class VspsUnitParams:
    """Electrical, mechanical and hydraulic constants of one VSPS unit.

    Time constants are in seconds; everything else is per unit.  ``sigma`` may
    be omitted and is then derived from the inductances; when given it must
    agree with ``1 - L_m**2 / (L_s * L_r)`` to 1e-12.
    """

    R_r: float = 3.0e-4
    L_s: float = 3.1
    L_r: float = 3.1
    L_m: float = 3.0
    sigma: Optional[float] = None
    I_rN: float = 1.1
    I_sN: float = 1.0
    U_rN: float = 0.109
    r_Ur: float = 1.0 / 0.95
    H_unit: float = 4.0
    omega_r_min: float = 0.85
    omega_r_max: float = 1.15
    T_p: float = 0.1
    T_g: float = 0.2
    G_rate_max: float = 0.15
    T_w: float = 1.0
    S_unit: float = 250.0
    f_p: float = 0.01
    G_min: float = 0.02
    omega_base: float = 2.0 * math.pi * 50.0

    def __post_init__(self):
        sigma = 1.0 - self.L_m ** 2 / (self.L_s * self.L_r)
        if self.sigma is None:
            object.__setattr__(self, "sigma", sigma)
        elif abs(self.sigma - sigma) > 1e-12:
            raise ValueError(
                f"sigma={self.sigma!r} inconsistent with inductances (expected {sigma!r})"
            )
        if not 0.0 < self.omega_r_min < 1.0 < self.omega_r_max:
            raise ValueError("speed bounds must satisfy 0 < omega_r_min < 1 < omega_r_max")
        for name in ("T_p", "T_g", "T_w", "H_unit"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("I_rN", "I_sN", "U_rN", "r_Ur", "S_unit", "G_rate_max", "R_r"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("leakage coefficient must lie in (0, 1)")
        if not 0.0 <= self.G_min < 1.0:
            raise ValueError("G_min must lie in [0, 1)")

    @property
    def T_r(self) -> float:
        """Rotor transient time constant ``sigma*L_r/R_r`` converted to seconds."""
        return self.sigma * self.L_r / (self.R_r * self.omega_base)


@dataclass(frozen=True)
class TunnelParams:
    """Common headrace tunnel shared by all units.

    ``T_wc`` is the tunnel water time constant on the unit flow base and ``f_c``
    the tunnel head-loss coefficient applied to the total flow.
    """

    T_wc: float = 0.5
    f_c: float = 0.005
    h_static: float = 1.0

    def __post_init__(self):
        if self.T_wc < 0.0 or self.f_c < 0.0 or self.h_static <= 0.0:
            raise ValueError("tunnel parameters must be non-negative with positive static head")


@dataclass(frozen=True)
class VspsState:
    omega_r: float
    P_e: float
    P_m: float
    G: float
    q: float
    h: float
    rate_limited: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not -1e-12 <= self.G <= 1.0 + 1e-12:
            raise ValueError(f"guide vane opening {self.G} outside [0, 1]")


# -- hill chart ---------------------------------------------------------------


@dataclass(frozen=True)
class ChartCoefficients:
    """Parametric efficiency ridge of the synthetic pump-turbine chart.

    ``eta(G, w, h) = eta_max - a_speed*(w/sqrt(h) - (w0 + w1*G))**2
    - a_gate*(G - gate_peak)**2`` and ``P_m = k * eta * G * h**1.5`` with ``k``
    chosen so that the full-gate ridge point delivers 1 pu at unit head.
    """

    eta_max: float = 0.92
    a_speed: float = 2.0
    a_gate: float = 0.1
    gate_peak: float = 0.8
    w0: float = 0.8
    w1: float = 0.25

    @property
    def k(self) -> float:
        return 1.0 / (self.eta_max - self.a_gate * (1.0 - self.gate_peak) ** 2)

    def as_tuple(self):
        return (self.eta_max, self.a_speed, self.a_gate, self.gate_peak, self.w0, self.w1, self.k)


def chart_efficiency(c: ChartCoefficients, G, omega_r, h):
    v = omega_r / np.sqrt(h) - (c.w0 + c.w1 * G)
    return c.eta_max - c.a_speed * v * v - c.a_gate * (G - c.gate_peak) ** 2


def chart_power(c: ChartCoefficients, G, omega_r, h):
    return c.k * chart_efficiency(c, G, omega_r, h) * G * h ** 1.5


def chart_power_partials(c: ChartCoefficients, G: float, omega_r: float, h: float):
    """Return ``(P_m, dP/dG, dP/domega_r, dP/dh)`` at one point."""
    sh = math.sqrt(h)
    v = omega_r / sh - (c.w0 + c.w1 * G)
    eta = c.eta_max - c.a_speed * v * v - c.a_gate * (G - c.gate_peak) ** 2
    deta_dG = 2.0 * c.a_speed * v * c.w1 - 2.0 * c.a_gate * (G - c.gate_peak)
    deta_dw = -2.0 * c.a_speed * v / sh
    deta_dh = c.a_speed * v * omega_r / (h * sh)
    h15 = h * sh
    P = c.k * eta * G * h15
    dG = c.k * h15 * (eta + G * deta_dG)
    dw = c.k * G * h15 * deta_dw
    dh = c.k * G * (1.5 * sh * eta + h15 * deta_dh)
    return P, dG, dw, dh


def _bilinear(xs, ys, table, x, y):
    i = int(np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2))
    j = int(np.clip(np.searchsorted(ys, y, side="right") - 1, 0, len(ys) - 2))
    tx = (x - xs[i]) / (xs[i + 1] - xs[i])
    ty = (y - ys[j]) / (ys[j + 1] - ys[j])
    return (
        (1.0 - tx) * (1.0 - ty) * table[i, j]
        + tx * (1.0 - ty) * table[i + 1, j]
        + (1.0 - tx) * ty * table[i, j + 1]
        + tx * ty * table[i + 1, j + 1]
    )


class HillChart:
    """Sampled pump-turbine chart plus optimal-speed and optimal-gate tables.

    Mechanical power is evaluated from the parametric form so that it is smooth
    for linearization; the sampled ``(G, omega_r, h)`` grid is what gets
    exported and validated.  The optimal-speed table maps ``(P*, h)`` to the
    speed on the efficiency ridge delivering ``P*``.
    """

    def __init__(
        self,
        coefficients: ChartCoefficients | None = None,
        gate_grid: Sequence[float] | None = None,
        speed_grid: Sequence[float] | None = None,
        head_grid: Sequence[float] | None = None,
        power_grid: Sequence[float] | None = None,
    ):
        self.coefficients = coefficients or ChartCoefficients()
        self.gate_grid = np.asarray(gate_grid if gate_grid is not None else np.linspace(0.0, 1.0, 21))
        self.speed_grid = np.asarray(speed_grid if speed_grid is not None else np.linspace(0.8, 1.2, 17))
        self.head_grid = np.asarray(head_grid if head_grid is not None else np.linspace(0.7, 1.3, 13))
        self.power_grid = np.asarray(power_grid if power_grid is not None else np.linspace(0.0, 1.2, 25))
        for name in ("gate_grid", "speed_grid", "head_grid", "power_grid"):
            g = getattr(self, name)
            if g.ndim != 1 or len(g) < 2 or np.any(np.diff(g) <= 0.0):
                raise ValueError(f"{name} must be strictly increasing with at least two nodes")
        Gm, Wm, Hm = np.meshgrid(self.gate_grid, self.speed_grid, self.head_grid, indexing="ij")
        self.efficiency = chart_efficiency(self.coefficients, Gm, Wm, Hm)
        if np.any(self.efficiency <= 0.0) or np.any(self.efficiency > 1.0):
            raise ValueError("chart efficiency must lie in (0, 1] on the sample grid")
        self.power = self.coefficients.k * self.efficiency * Gm * Hm ** 1.5
        self.gate_table, self.speed_table = self._ridge_tables()

    def _ridge_gate(self, P, h):
        c = self.coefficients

        def ridge_power(G):
            return c.k * (c.eta_max - c.a_gate * (G - c.gate_peak) ** 2) * G * h ** 1.5

        if P <= 0.0:
            return 0.0
        if P >= ridge_power(1.0):
            return 1.0
        return brentq(lambda G: ridge_power(G) - P, 0.0, 1.0, xtol=1e-14, rtol=1e-14)

    def _ridge_tables(self):
        c = self.coefficients
        gates = np.empty((len(self.power_grid), len(self.head_grid)))
        for i, P in enumerate(self.power_grid):
            for j, h in enumerate(self.head_grid):
                gates[i, j] = self._ridge_gate(P, h)
        speeds = np.sqrt(self.head_grid)[None, :] * (c.w0 + c.w1 * gates)
        return gates, speeds

    # point evaluations used by controllers and the Python kernel
    def mechanical_power(self, G, omega_r, h):
        return chart_power(self.coefficients, G, omega_r, h)

    def partials(self, G, omega_r, h):
        return chart_power_partials(self.coefficients, G, omega_r, h)

    def in_hull(self, G, omega_r, h) -> bool:
        return (
            self.gate_grid[0] <= G <= self.gate_grid[-1]
            and self.speed_grid[0] <= omega_r <= self.speed_grid[-1]
            and self.head_grid[0] <= h <= self.head_grid[-1]
        )

    def _check_table_query(self, P, h, clamp):
        inside = self.power_grid[0] <= P <= self.power_grid[-1] and self.head_grid[0] <= h <= self.head_grid[-1]
        if inside:
            return P, h
        if not clamp:
            raise OutOfChart(f"(P*={P}, h={h}) outside the optimal-speed table")
        warnings.warn(f"(P*={P}, h={h}) clamped into the optimal-speed table", ClampWarning, stacklevel=3)
        return (
            float(np.clip(P, self.power_grid[0], self.power_grid[-1])),
            float(np.clip(h, self.head_grid[0], self.head_grid[-1])),
        )

    def optimal_gate(self, P_star, h, clamp=True):
        P_star, h = self._check_table_query(P_star, h, clamp)
        return float(_bilinear(self.power_grid, self.head_grid, self.gate_table, P_star, h))


def optimal_speed(P_star, h, chart: HillChart, omega_r_min=0.0, omega_r_max=math.inf, clamp=False):
    """Speed reference for power command ``P_star`` at head ``h``.

    Bilinear interpolation on the chart's optimal-speed table, clamped to the
    unit's speed range.  Queries outside the table raise :class:`OutOfChart`
    unless ``clamp`` is set, in which case the query is projected onto the
    table edge and a :class:`ClampWarning` is emitted.
    """
    P_star, h = chart._check_table_query(P_star, h, clamp)
    w = _bilinear(chart.power_grid, chart.head_grid, chart.speed_table, P_star, h)
    return float(min(max(w, omega_r_min), omega_r_max))


# -- machine algebra ----------------------------------------------------------


class DfimQuantities(NamedTuple):
    i_rd: float
    i_rq: float
    i_sd: float
    i_sq: float
    u_r_amplitude: float
    I_r: float
    I_s: float
    U_r_exact: float


def rotor_d_coupling(omega_PCC, omega_r, params: VspsUnitParams, U_s=U_S):
    """Slip-dependent d-axis rotor voltage at zero reactive power.

    Returns ``-sigma*L_r*w_slp*i_rq + L_m*w_slp*U_s/(L_s*w_PCC)`` with the
    q-axis current fixed by ``Q = 0``.  This is the quantity whose magnitude,
    scaled by ``r_Ur``, approximates the rotor voltage amplitude.
    """
    w_slp = omega_PCC - omega_r
    i_rq = -U_s / (params.L_m * omega_PCC)
    return -params.sigma * params.L_r * w_slp * i_rq + params.L_m * w_slp * U_s / (params.L_s * omega_PCC)


def dfim_algebra(state, omega_PCC, params: VspsUnitParams, U_s=U_S, dP_e_dt=0.0) -> DfimQuantities:
    """Algebraic rotor/stator currents and rotor voltage at ``Q = 0``.

    ``state`` needs ``P_e`` and ``omega_r`` attributes.  ``dP_e_dt`` (pu/s)
    adds the rotor-current derivative term to the exact rotor voltage; leave at
    zero for the steady-state value.
    """
    P_e = state.P_e
    omega_r = state.omega_r
    if omega_PCC <= 0.0 or omega_r <= 0.0:
        raise NonPhysical(f"speeds must be positive (omega_PCC={omega_PCC}, omega_r={omega_r})")
    p = params
    gain = p.L_m * U_s * omega_r / (p.L_s * omega_PCC)
    i_rd = P_e / gain
    i_rq = -U_s / (p.L_m * omega_PCC)
    i_sd = -(p.L_m / p.L_s) * i_rd
    i_sq = -(p.L_m / p.L_s) * i_rq - U_s / (p.L_s * omega_PCC)
    w_slp = omega_PCC - omega_r
    d_rd = rotor_d_coupling(omega_PCC, omega_r, p, U_s)
    di_rd = dP_e_dt / gain
    u_rd = p.R_r * i_rd + p.sigma * p.L_r * di_rd / p.omega_base + d_rd
    u_rq = p.R_r * i_rq + p.sigma * p.L_r * w_slp * i_rd
    return DfimQuantities(
        i_rd=i_rd,
        i_rq=i_rq,
        i_sd=i_sd,
        i_sq=i_sq,
        u_r_amplitude=p.r_Ur * abs(d_rd),
        I_r=math.hypot(i_rd, i_rq),
        I_s=math.hypot(i_sd, i_sq),
        U_r_exact=math.hypot(u_rd, u_rq),
    )


def electrical_power_from_rotor_current(i_rd, omega_PCC, omega_r, params: VspsUnitParams, U_s=U_S):
    return params.L_m * U_s * omega_r / (params.L_s * omega_PCC) * i_rd


def stator_current_ratio_form(P_e, omega_r, U_s=U_S):
    """Stator current amplitude as ``P_e / (U_s * omega_r)`` at ``Q = 0``."""
    return P_e / (U_s * omega_r)


# -- hydraulics ---------------------------------------------------------------


def turbine_head(q, G):
    return (q / G) ** 2


def shared_penstock_couple(unit_flows, gates, tunnel: TunnelParams, unit_params: Sequence[VspsUnitParams]):
    """Boundary heads and flow derivatives for units on a common tunnel.

    Each unit obeys ``T_w*dq_i/dt = h_b - f_p*q_i**2 - h_i`` where the boundary
    head ``h_b = h_static - f_c*Q**2 - T_wc*dQ/dt`` is shared through the total
    flow ``Q``.  Returns ``(boundary_heads, dq_dt)``; with ``T_wc = 0`` and
    ``f_c = 0`` each unit sees the static head regardless of the others.
    """
    q = np.asarray(unit_flows, dtype=float)
    G = np.asarray(gates, dtype=float)
    if q.ndim != 1 or len(q) < 1 or q.shape != G.shape or len(unit_params) != len(q):
        raise ValueError("need one flow, gate and parameter set per unit")
    Tw = np.array([p.T_w for p in unit_params])
    fp = np.array([p.f_p for p in unit_params])
    Q = q.sum()
    r = tunnel.h_static - tunnel.f_c * Q * Q - fp * q * q - turbine_head(q, G)
    dQ = np.sum(r / Tw) / (1.0 + tunnel.T_wc * np.sum(1.0 / Tw))
    dq = (r - tunnel.T_wc * dQ) / Tw
    h_b = tunnel.h_static - tunnel.f_c * Q * Q - tunnel.T_wc * dQ
    return np.full(len(q), h_b), dq


# -- single-unit integration --------------------------------------------------


def _servo_rate(G_star, G, params: VspsUnitParams):
    rate = (G_star - G) / params.T_g
    if rate > params.G_rate_max:
        return params.G_rate_max, True
    if rate < -params.G_rate_max:
        return -params.G_rate_max, True
    return rate, False


def unit_derivatives(x, P_star, G_star, h_boundary, params: VspsUnitParams, chart: HillChart):
    """Right-hand side for ``x = (omega_r, P_e, G, q)`` with a fixed boundary head."""
    omega_r, P_e, G, q = x
    h = turbine_head(q, G)
    P_m = chart.mechanical_power(G, omega_r, h)
    dG, limited = _servo_rate(G_star, G, params)
    return (
        (P_m - P_e) / (2.0 * params.H_unit * omega_r),
        (P_star - P_e) / params.T_p,
        dG,
        (h_boundary - params.f_p * q * q - h) / params.T_w,
    ), limited


def step_unit(state: VspsState, inputs, h_boundary, dt, params: VspsUnitParams, chart: HillChart) -> VspsState:
    """Advance one isolated unit by ``dt`` with classical RK4.

    ``inputs`` is a mapping with ``P_star`` and ``G_star``; the guide-vane
    command is clamped to ``[G_min, 1]`` before it reaches the servo.  The
    returned state has ``rate_limited`` set when the servo slew limit was hit in
    any RK stage.
    """
    if dt <= 0.0 or dt > 0.01:
        raise ValueError("dt must lie in (0, 10 ms]")
    P_star = float(inputs["P_star"])
    G_star = min(max(float(inputs["G_star"]), params.G_min), 1.0)
    x0 = (state.omega_r, state.P_e, state.G, state.q)

    def f(x):
        return unit_derivatives(x, P_star, G_star, h_boundary, params, chart)

    k1, l1 = f(x0)
    k2, l2 = f(tuple(a + 0.5 * dt * b for a, b in zip(x0, k1)))
    k3, l3 = f(tuple(a + 0.5 * dt * b for a, b in zip(x0, k2)))
    k4, l4 = f(tuple(a + dt * b for a, b in zip(x0, k3)))
    x1 = tuple(a + dt / 6.0 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(x0, k1, k2, k3, k4))
    omega_r, P_e, G, q = x1
    G = min(max(G, 0.0), 1.0)
    if not params.omega_r_min - SPEED_ABORT_MARGIN <= omega_r <= params.omega_r_max + SPEED_ABORT_MARGIN:
        raise SpeedBoundViolation(f"rotor speed {omega_r:.4f} pu outside abort band")
    limited = l1 or l2 or l3 or l4
    if limited:
        warnings.warn("guide vane command slew-limited", ClampWarning, stacklevel=2)
    h = turbine_head(q, G)
    return VspsState(
        omega_r=omega_r,
        P_e=P_e,
        P_m=float(chart.mechanical_power(G, omega_r, h)),
        G=G,
        q=q,
        h=h,
        rate_limited=limited,
    )


def steady_state(P_set, params_list: Sequence[VspsUnitParams], chart: HillChart, tunnel: TunnelParams,
                 speeds: Optional[Sequence[float]] = None):
    """Equilibrium ``(omega_r, G, q, h)`` per unit delivering ``P_set`` each.

    Units whose entry in ``speeds`` is ``None`` (or all units when ``speeds``
    is omitted) sit on the optimal-speed ridge; synchronous units pass 1.0.
    """
    from scipy.optimize import fsolve

    P = np.asarray(P_set, dtype=float)
    n = len(P)
    fp = np.array([p.f_p for p in params_list])

    def speeds_for(h):
        out = np.empty(n)
        for i in range(n):
            fixed = None if speeds is None else speeds[i]
            if fixed is None:
                p = params_list[i]
                out[i] = optimal_speed(P[i], h[i], chart, p.omega_r_min, p.omega_r_max, clamp=True)
            else:
                out[i] = fixed
        return out

    def residual(z):
        G = z[:n]
        q = z[n:]
        h = (q / G) ** 2
        w = speeds_for(h)
        Q = q.sum()
        r_head = tunnel.h_static - tunnel.f_c * Q * Q - fp * q * q - h
        r_power = chart_power(chart.coefficients, G, w, h) - P
        return np.concatenate([r_power, r_head])

    G0 = np.clip(P, 0.05, 1.0)
    z0 = np.concatenate([G0, G0 * 0.98])
    z, info, ier, msg = fsolve(residual, z0, xtol=1e-13, full_output=True)
    if np.max(np.abs(residual(z))) > 1e-10:
        raise NonPhysical(f"no hydraulic equilibrium for P_set={P.tolist()}: {msg}")
    G = z[:n]
    q = z[n:]
    h = (q / G) ** 2
    return speeds_for(h), G, q, h


def with_params(params: VspsUnitParams, **changes) -> VspsUnitParams:
    """Copy of ``params`` with fields replaced; ``sigma`` is re-derived."""
    if any(k in changes for k in ("L_s", "L_r", "L_m")) and "sigma" not in changes:
        changes["sigma"] = None
    return replace(params, **changes)
