"""Successive linearization of the prediction model.

The prediction model shares the state layout of the truth plant restricted to
variable-speed units::

    x = [dw, P_bat, (g1, g2) per synchronous unit, (w_r, P_e, G, q) per unit]
    u = [(P*, G*) per unit]
    d = [dP_load]

It differs from the truth plant only in dropping the servo slew limit, the
vane-command clamp and the battery output limit, which makes it smooth.
Jacobians are analytic; a central-difference oracle lives in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateOperatingPoint, DimensionMismatch
from .grid_model import GridParams
from .vsps_model import HillChart, TunnelParams, VspsUnitParams


class PredictionModel:
    """Structure and parameters of the nonlinear prediction model."""

    def __init__(self, grid: GridParams, units: Sequence[VspsUnitParams], chart: HillChart,
                 tunnel: TunnelParams, P_dispatch: Sequence[float]):
        self.grid = grid
        self.units = list(units)
        self.chart = chart
        self.tunnel = tunnel
        self.P0 = np.asarray(P_dispatch, dtype=float)
        self.n = len(self.units)
        self.m = len(grid.sync_units)
        self.base = 2 + 2 * self.m
        self.nx = self.base + 4 * self.n
        self.nu = 2 * self.n
        self.nd = 1
        self.scale = np.array([p.S_unit / grid.S_base for p in self.units])
        self.sync_gain = grid.sync_gains()

    # index helpers
    def i_wr(self, i):
        return self.base + 4 * i

    def i_pe(self, i):
        return self.base + 4 * i + 1

    def i_G(self, i):
        return self.base + 4 * i + 2

    def i_q(self, i):
        return self.base + 4 * i + 3

    @staticmethod
    def i_Pstar(i):
        return 2 * i

    @staticmethod
    def i_Gstar(i):
        return 2 * i + 1

    def measurement_matrix(self):
        """Rows picking ``dw`` and per-unit ``(w_r, P_e, G)``."""
        idx = [0]
        for i in range(self.n):
            idx += [self.i_wr(i), self.i_pe(i), self.i_G(i)]
        C = np.zeros((len(idx), self.nx))
        C[np.arange(len(idx)), idx] = 1.0
        return C

    def heads(self, x):
        return np.array([(x[self.i_q(i)] / x[self.i_G(i)]) ** 2 for i in range(self.n)])

    def mechanical_power(self, x):
        h = self.heads(x)
        return np.array([self.chart.mechanical_power(x[self.i_G(i)], x[self.i_wr(i)], h[i]) for i in range(self.n)])

    def rhs(self, x, u, d):
        """Continuous-time right-hand side ``f(x, u, d)``."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        d = float(np.ravel(d)[0]) if np.ndim(d) else float(d)
        g = self.grid
        f = np.zeros(self.nx)
        dw = x[0]
        gen = x[1] + np.sum(x[3:self.base:2])
        for i, p in enumerate(self.units):
            gen += self.scale[i] * (x[self.i_pe(i)] - self.P0[i])
        f[0] = (gen - d - g.D_sys * dw) / (2.0 * g.H_sys)
        f[1] = (-g.battery_gain() * dw - x[1]) / g.battery.T
        for k, su in enumerate(g.sync_units):
            f[2 + 2 * k] = (-self.sync_gain[k] * dw - x[2 + 2 * k]) / su.T_gov
            f[3 + 2 * k] = (x[2 + 2 * k] - x[3 + 2 * k]) / su.T_turb
        q = np.array([x[self.i_q(i)] for i in range(self.n)])
        G = np.array([x[self.i_G(i)] for i in range(self.n)])
        h = (q / G) ** 2
        Q = q.sum()
        Tw = np.array([p.T_w for p in self.units])
        fp = np.array([p.f_p for p in self.units])
        t = self.tunnel
        r = t.h_static - t.f_c * Q * Q - fp * q * q - h
        dQ = np.sum(r / Tw) / (1.0 + t.T_wc * np.sum(1.0 / Tw))
        for i, p in enumerate(self.units):
            wr = x[self.i_wr(i)]
            pe = x[self.i_pe(i)]
            pm = self.chart.mechanical_power(G[i], wr, h[i])
            f[self.i_wr(i)] = (pm - pe) / (2.0 * p.H_unit * wr)
            f[self.i_pe(i)] = (u[self.i_Pstar(i)] - pe) / p.T_p
            f[self.i_G(i)] = (u[self.i_Gstar(i)] - G[i]) / p.T_g
            f[self.i_q(i)] = (r[i] - t.T_wc * dQ) / p.T_w
        return f


@dataclass(frozen=True)
class OperatingPoint:
    """Absolute state, input and load values at linearization time."""

    x: np.ndarray
    u: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        for name in ("x", "u", "d"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
            if not np.all(np.isfinite(v)):
                raise DegenerateOperatingPoint(f"non-finite entries in operating point {name}")
            object.__setattr__(self, name, v)


@dataclass
class Jacobians:
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    f0: np.ndarray
    x_op: np.ndarray
    u_op: np.ndarray
    d_op: np.ndarray


@dataclass
class LinearModel:
    """Discrete affine model in deviations from ``(x_op, u_op, d_op)``::

        x(k+1) - x_op = A (x(k) - x_op) + B (u - u_op) + E (d - d_op) + f0
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    C: np.ndarray
    f0: np.ndarray
    dt: float
    x_op: np.ndarray
    u_op: np.ndarray
    d_op: np.ndarray

    def __post_init__(self):
        nx = self.A.shape[0]
        if self.A.shape != (nx, nx) or self.B.shape[0] != nx or self.E.shape[0] != nx or self.f0.shape != (nx,):
            raise DimensionMismatch("inconsistent linear model dimensions")
        if self.C.shape[1] != nx:
            raise DimensionMismatch("measurement matrix has wrong column count")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")

    @property
    def nx(self):
        return self.A.shape[0]

    @property
    def nu(self):
        return self.B.shape[1]

    def step(self, x, u, d=None):
        d = self.d_op if d is None else np.atleast_1d(d)
        return (self.x_op + self.A @ (x - self.x_op) + self.B @ (u - self.u_op)
                + self.E @ (d - self.d_op) + self.f0)


def linearize_at(model: PredictionModel, op: OperatingPoint) -> Jacobians:
    """Analytic Jacobians of :meth:`PredictionModel.rhs` at an operating point."""
    x, u, d = op.x, op.u, op.d
    if x.shape != (model.nx,) or u.shape != (model.nu,) or d.shape != (model.nd,):
        raise DimensionMismatch("operating point has wrong dimension")
    g = model.grid
    n = model.n
    A = np.zeros((model.nx, model.nx))
    B = np.zeros((model.nx, model.nu))
    E = np.zeros((model.nx, 1))
    two_h = 2.0 * g.H_sys

    A[0, 0] = -g.D_sys / two_h
    A[0, 1] = 1.0 / two_h
    for k in range(model.m):
        A[0, 3 + 2 * k] = 1.0 / two_h
    E[0, 0] = -1.0 / two_h
    A[1, 0] = -g.battery_gain() / g.battery.T
    A[1, 1] = -1.0 / g.battery.T
    for k, su in enumerate(g.sync_units):
        A[2 + 2 * k, 0] = -model.sync_gain[k] / su.T_gov
        A[2 + 2 * k, 2 + 2 * k] = -1.0 / su.T_gov
        A[3 + 2 * k, 2 + 2 * k] = 1.0 / su.T_turb
        A[3 + 2 * k, 3 + 2 * k] = -1.0 / su.T_turb

    t = model.tunnel
    q = np.array([x[model.i_q(i)] for i in range(n)])
    G = np.array([x[model.i_G(i)] for i in range(n)])
    if np.any(G <= 0.0) or np.any(G > 1.0 + 1e-9):
        raise DegenerateOperatingPoint(f"guide vane opening outside (0, 1]: {G}")
    h = (q / G) ** 2
    dh_dq = 2.0 * q / G ** 2
    dh_dG = -2.0 * q ** 2 / G ** 3
    Q = q.sum()
    Tw = np.array([p.T_w for p in model.units])
    fp = np.array([p.f_p for p in model.units])
    c = 1.0 / (1.0 + t.T_wc * np.sum(1.0 / Tw))

    # dr_i/dq_j and dr_i/dG_j of the head residual r_i
    dr_dq = np.full((n, n), -2.0 * t.f_c * Q)
    dr_dq[np.diag_indices(n)] -= 2.0 * fp * q + dh_dq
    dr_dG = np.diag(-dh_dG)
    dQ_dq = c * (dr_dq / Tw[:, None]).sum(axis=0)
    dQ_dG = c * (dr_dG / Tw[:, None]).sum(axis=0)

    for i, p in enumerate(model.units):
        wr = x[model.i_wr(i)]
        pe = x[model.i_pe(i)]
        if wr <= 0.0:
            raise DegenerateOperatingPoint("non-positive rotor speed")
        if not model.chart.in_hull(G[i], wr, h[i]):
            raise DegenerateOperatingPoint(
                f"unit {i}: (G={G[i]:.4f}, w_r={wr:.4f}, h={h[i]:.4f}) outside the hill chart")
        pm, Pg, Pw, Ph = model.chart.partials(G[i], wr, h[i])
        jw = model.i_wr(i)
        jp = model.i_pe(i)
        jg = model.i_G(i)
        jq = model.i_q(i)
        A[0, jp] = model.scale[i] / two_h
        m2h = 2.0 * p.H_unit
        A[jw, jw] = Pw / (m2h * wr) - (pm - pe) / (m2h * wr * wr)
        A[jw, jp] = -1.0 / (m2h * wr)
        A[jw, jg] = (Pg + Ph * dh_dG[i]) / (m2h * wr)
        A[jw, jq] = Ph * dh_dq[i] / (m2h * wr)
        A[jp, jp] = -1.0 / p.T_p
        B[jp, model.i_Pstar(i)] = 1.0 / p.T_p
        A[jg, jg] = -1.0 / p.T_g
        B[jg, model.i_Gstar(i)] = 1.0 / p.T_g
        for j in range(n):
            A[jq, model.i_q(j)] = (dr_dq[i, j] - t.T_wc * dQ_dq[j]) / p.T_w
            A[jq, model.i_G(j)] = (dr_dG[i, j] - t.T_wc * dQ_dG[j]) / p.T_w

    f0 = model.rhs(x, u, d)
    return Jacobians(A=A, B=B, E=E, f0=f0, x_op=x.copy(), u_op=u.copy(), d_op=d.copy())


def discretize(jac: Jacobians, dt, C=None) -> LinearModel:
    """Zero-order-hold discretization via the exponential of an augmented matrix.

    The constant drift ``f0`` is carried as an extra held input, so the affine
    part is discretized exactly along with ``B`` and ``E``.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    nx = jac.A.shape[0]
    nu = jac.B.shape[1]
    nd = jac.E.shape[1]
    M = np.zeros((nx + nu + nd + 1, nx + nu + nd + 1))
    M[:nx, :nx] = jac.A
    M[:nx, nx:nx + nu] = jac.B
    M[:nx, nx + nu:nx + nu + nd] = jac.E
    M[:nx, -1] = jac.f0
    Phi = expm(M * dt)
    C = np.eye(nx) if C is None else C
    return LinearModel(
        A=Phi[:nx, :nx],
        B=Phi[:nx, nx:nx + nu],
        E=Phi[:nx, nx + nu:nx + nu + nd],
        C=C,
        f0=Phi[:nx, -1],
        dt=float(dt),
        x_op=jac.x_op,
        u_op=jac.u_op,
        d_op=jac.d_op,
    )


def compose(first: LinearModel, second: LinearModel) -> LinearModel:
    """Model equal to applying ``first`` then ``second`` with inputs held.

    Both models must share the same operating point.
    """
    A = second.A @ first.A
    B = second.A @ first.B + second.B
    E = second.A @ first.E + second.E
    f0 = second.A @ first.f0 + second.f0
    return LinearModel(A=A, B=B, E=E, C=first.C, f0=f0, dt=first.dt + second.dt,
                       x_op=first.x_op, u_op=first.u_op, d_op=first.d_op)


def linear_model_at(model: PredictionModel, op: OperatingPoint, dt) -> LinearModel:
    return discretize(linearize_at(model, op), dt, C=model.measurement_matrix())
