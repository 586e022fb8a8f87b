"""Adaptive model predictive primary frequency control of a VSPS plant.

Every control cycle the controller

1. runs a Kalman filter on last cycle's linear model to estimate the state
   (and the load disturbance),
2. relinearizes the prediction model and rebuilds the equivalent limit rows
   at the new estimate,
3. sets the frequency target from the droop-share rule and the rotor-speed
   targets from the optimal-speed table,
4. solves a condensed QP over the input deviations of the control horizon.

The cost tracks grid frequency deviation and rotor speeds over the
prediction horizon; inputs past the control horizon hold their last value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qp as _qp
from .constraints import ConstraintSet, build_constraint_set
from .errors import DimensionMismatch, InfeasibleQP, MaxIterations, VspsError
from .estimator import augment_with_disturbance, initial_state, predict, update
from .linearize import LinearModel, OperatingPoint, PredictionModel, linear_model_at
from .vsps_model import optimal_speed


@dataclass(frozen=True)
class AmpcConfig:
    """Tuning of the predictive controller.

    ``p`` holds one rotor-speed weight per unit (a scalar is broadcast).
    ``rho_u`` is the ridge on the stacked input deviations and ``slack_weight``
    the quadratic penalty on softened limit rows.
    """

    N: int = 60
    N_c: int = 5
    p_PCC: float = 1.0
    p: tuple = (0.001,)
    dt_ctrl: float = 0.1
    rho_u: float = 1e-4
    slack_weight: float = 1e6
    start_at_one: bool = False
    printed_form: bool = False
    vs_droop: float = 0.05
    speed_margin: float = 0.05
    imbalance_T: float = 1.0
    Q_proc: float = 1e-6
    Q_dist: float = 10.0
    R_meas: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in np.atleast_1d(self.p)))
        if not 1 <= self.N_c <= self.N:
            raise ValueError("need 1 <= N_c <= N")
        if self.p_PCC < 0.0 or any(v < 0.0 for v in self.p) or self.rho_u < 0.0:
            raise ValueError("weights must be non-negative")
        if self.p_PCC + sum(self.p) <= 0.0:
            raise ValueError("at least one tracking weight must be positive")
        if self.dt_ctrl <= 0.0 or self.slack_weight <= 0.0:
            raise ValueError("dt_ctrl and slack_weight must be positive")

    def unit_weights(self, n):
        if len(self.p) == 1:
            return np.full(n, self.p[0])
        if len(self.p) != n:
            raise DimensionMismatch(f"{len(self.p)} rotor-speed weights for {n} units")
        return np.array(self.p)


@dataclass(frozen=True)
class TrackingRefs:
    """State indices tracked by the cost, their absolute targets and weights."""

    index: np.ndarray
    target: np.ndarray
    weight: np.ndarray


@dataclass
class QP:
    H: np.ndarray
    g: np.ndarray
    const: float
    A: np.ndarray
    b: np.ndarray
    labels: list
    n_u: int
    nu: int
    N_c: int
    n_slack: int
    slack_names: list
    row_meta: list = field(default_factory=list)
    T: np.ndarray = None  # moves -> deviations from the previous command


@dataclass
class ControlOutput:
    """Commands for the control horizon plus solver diagnostics.

    ``dU`` holds input deviations from the previous command, shaped
    ``(N_c, nu)``; ``P_star``/``G_star`` are the absolute command sequences
    ``(N_c, n_units)``.
    """

    dU: np.ndarray
    P_star: np.ndarray
    G_star: np.ndarray
    dP_star: np.ndarray
    objective: float
    kkt_residual: float
    active: list
    slack: dict
    status: str = "ok"
    message: str = ""


def reference_targets(units: Sequence[tuple], F_sys, dP_imb):
    """Frequency target sharing the imbalance by droop.

    ``units`` are ``(S_j, delta_j)`` pairs and ``dP_imb`` is the imbalance on
    the base ``sum(S_j)``; the return value is
    ``sum(S_j) / (sum(S_j/delta_j) + F_sys) * dP_imb``.
    """
    S = np.array([u[0] for u in units], dtype=float)
    delta = np.array([u[1] for u in units], dtype=float)
    if np.any(delta <= 0.0):
        raise ValueError("droop coefficients must be positive")
    return float(S.sum() / (np.sum(S / delta) + F_sys) * dP_imb)


def _rollout(model: LinearModel, dx0, dd, N, N_c):
    """Condensed predictions ``dx(m) = Su[m] @ U + w[m]`` for m = 0..N."""
    nx, nu = model.nx, model.nu
    Su = np.zeros((N + 1, nx, N_c * nu))
    w = np.zeros((N + 1, nx))
    w[0] = dx0
    c = model.E @ dd + model.f0
    for m in range(N):
        blk = min(m, N_c - 1)
        Su[m + 1] = model.A @ Su[m]
        Su[m + 1][:, blk * nu:(blk + 1) * nu] += model.B
        w[m + 1] = model.A @ w[m] + c
    return Su, w


def build_qp(model: LinearModel, constraints: ConstraintSet, x_hat, refs: TrackingRefs, cfg: AmpcConfig,
             d_hat=None) -> QP:
    """Condensed QP in ``z = [dV, s]``: per-step input moves then slack families.

    ``dV[k] = u(k) - u(k-1)`` with ``u(-1)`` the previous command, so the ridge
    ``rho_u`` acts as move suppression.  The objective
    ``0.5 z'Hz + g'z + const`` equals the horizon cost of the trajectory
    implied by ``z`` (tracking, ridge and slack penalty).
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != (model.nx,):
        raise DimensionMismatch("state estimate does not match the model")
    N, N_c, nu = cfg.N, cfg.N_c, model.nu
    if constraints.Ax.shape[1] != N * model.nx or constraints.Au.shape[1] != N_c * nu:
        raise DimensionMismatch("constraint set horizon differs from the configuration")
    d = model.d_op if d_hat is None else np.atleast_1d(d_hat)
    Su, w = _rollout(model, x_hat - model.x_op, d - model.d_op, N, N_c)
    n_u = N_c * nu
    idx = np.asarray(refs.index)
    W = np.asarray(refs.weight, dtype=float)
    y_off = model.x_op[idx] - np.asarray(refs.target, dtype=float)

    # deviations from the previous command are cumulative sums of the moves
    T = np.kron(np.tril(np.ones((N_c, N_c))), np.eye(nu))
    Hu = np.zeros((n_u, n_u))
    gu = np.zeros(n_u)
    const = 0.0
    m0 = 1 if cfg.start_at_one else 0
    for m in range(m0, N + m0):
        S = Su[m][idx]
        e0 = w[m][idx] + y_off
        SW = S.T * W
        Hu += SW @ S
        gu += SW @ e0
        const += 0.5 * float(e0 @ (W * e0))

    Hu = T.T @ Hu @ T + cfg.rho_u * np.eye(n_u)
    gu = T.T @ gu

    # constraint rows through the rollout
    X_S = Su[1:].reshape(N * model.nx, n_u)
    X_w = w[1:].reshape(N * model.nx)
    A_u = (constraints.Ax @ X_S + constraints.Au) @ T
    b = constraints.b - constraints.Ax @ X_w
    ns = constraints.n_families
    A = np.zeros((len(b) + ns, n_u + ns))
    A[:len(b), :n_u] = A_u
    soft = constraints.family >= 0
    A[np.nonzero(soft)[0], n_u + constraints.family[soft]] = -1.0
    A[len(b):, n_u:] = -np.eye(ns)
    b_all = np.concatenate([b, np.zeros(ns)])
    labels = list(constraints.labels) + ["slack_sign"] * ns
    meta = list(zip(constraints.labels, constraints.units, constraints.steps)) + [("slack_sign", j, 0) for j in range(ns)]

    H = np.zeros((n_u + ns, n_u + ns))
    H[:n_u, :n_u] = 0.5 * (Hu + Hu.T)
    H[n_u:, n_u:] = cfg.slack_weight * np.eye(ns)
    g = np.concatenate([gu, np.zeros(ns)])
    return QP(H=H, g=g, const=const, A=A, b=b_all, labels=labels, n_u=n_u, nu=nu, N_c=N_c, n_slack=ns,
              slack_names=list(constraints.family_names), row_meta=meta, T=T)


def solve_qp(qp: QP, u_prev=None, P_set=None) -> ControlOutput:
    """Solve a controller QP and package the command sequences."""
    res = _qp.solve_qp(qp.H, qp.g, qp.A, qp.b)
    z = res.x
    dU = (qp.T @ z[:qp.n_u]).reshape(qp.N_c, qp.nu)
    u_prev = np.zeros(qp.nu) if u_prev is None else np.asarray(u_prev, dtype=float)
    U = u_prev[None, :] + dU
    P_star = U[:, 0::2]
    G_star = U[:, 1::2]
    P_set = np.zeros(P_star.shape[1]) if P_set is None else np.asarray(P_set, dtype=float)
    active = [qp.row_meta[i] for i in res.active if qp.labels[i] != "slack_sign"]
    slack = {name: float(v) for name, v in zip(qp.slack_names, z[qp.n_u:])}
    return ControlOutput(
        dU=dU, P_star=P_star, G_star=G_star, dP_star=P_star - P_set[None, :],
        objective=float(res.objective + qp.const),
        kkt_residual=max(res.residuals["stationarity"], res.residuals["primal"], res.residuals["complementarity"]),
        active=active, slack=slack,
    )


class AmpcController:
    """Receding-horizon controller bound to one plant configuration.

    Parameters
    ----------
    model : PredictionModel
    P_set : sequence of float
        Dispatched power of each unit (pu of unit rating).
    cfg : AmpcConfig
    x0 : array
        Initial state estimate, normally the plant equilibrium.
    u0 : array
        Command applied before the first cycle.
    """

    def __init__(self, model: PredictionModel, P_set, cfg: AmpcConfig, x0, u0):
        self.model = model
        self.cfg = cfg
        self.P_set = np.asarray(P_set, dtype=float)
        self.u_prev = np.asarray(u0, dtype=float).copy()
        self.weights = cfg.unit_weights(model.n)
        nz = model.nx + model.nd
        Q = np.full(nz, cfg.Q_proc)
        Q[model.nx:] = cfg.Q_dist
        self.est = initial_state(np.concatenate([x0, np.zeros(model.nd)]), P0=cfg.Q_proc, Q_proc=np.diag(Q),
                                 R_meas=cfg.R_meas, n_y=1 + 3 * model.n)
        self.C = model.measurement_matrix()
        self._aug = None
        self.dP_imb = 0.0
        self._dw_prev = None
        self.cycles = 0
        self.failures = 0
        self.last = None
        g = model.grid
        self.participants = list(g.participants()) + [(p.S_unit / g.S_base, cfg.vs_droop) for p in model.units]
        self.S_total = sum(s for s, _ in self.participants)

    def measurement_vector(self, meas):
        y = [meas["dw"]]
        for i in range(self.model.n):
            y += [meas["omega_r"][i], meas["P_e"][i], meas["G"][i]]
        return np.array(y, dtype=float)

    def _estimate(self, y):
        if self._aug is not None:
            self.est = predict(self.est, self._aug, self.u_prev)
        self.est = update(self.est, y, np.hstack([self.C, np.zeros((self.C.shape[0], self.model.nd))]))
        return self.est.x_hat[:self.model.nx], self.est.x_hat[self.model.nx:]

    def _imbalance(self, x_hat, dw):
        """Low-passed load estimate from the swing-equation residual."""
        m = self.model
        g = m.grid
        gen = x_hat[1] + np.sum(x_hat[3:m.base:2]) + np.sum(
            m.scale * (np.array([x_hat[m.i_pe(i)] for i in range(m.n)]) - m.P0))
        if self._dw_prev is None:
            rate = 0.0
        else:
            rate = (dw - self._dw_prev) / self.cfg.dt_ctrl
        self._dw_prev = dw
        load = gen - g.D_sys * dw - 2.0 * g.H_sys * rate
        a = 1.0 - math.exp(-self.cfg.dt_ctrl / self.cfg.imbalance_T)
        self.dP_imb += a * (-load / self.S_total - self.dP_imb)
        return self.dP_imb

    def references(self, x_hat, dP_imb):
        m = self.model
        dw_star = reference_targets(self.participants, m.grid.F_sys, dP_imb)
        h = m.heads(x_hat)
        idx = [0]
        target = [dw_star]
        for i, p in enumerate(m.units):
            # settled command implied by the droop share; the instantaneous
            # command would feed the speed target back into itself
            P_cmd = self.P_set[i] - dw_star / self.cfg.vs_droop
            idx.append(m.i_wr(i))
            target.append(optimal_speed(P_cmd, h[i], m.chart, p.omega_r_min + self.cfg.speed_margin,
                                        p.omega_r_max - self.cfg.speed_margin, clamp=True))
        weight = np.concatenate([[self.cfg.p_PCC], self.weights])
        return TrackingRefs(index=np.array(idx), target=np.array(target), weight=weight)

    def control_cycle(self, meas) -> ControlOutput:
        """One estimate / relinearize / optimize cycle; returns the commands."""
        import warnings

        m = self.model
        cfg = self.cfg
        y = self.measurement_vector(meas)
        x_hat, d_hat = self._estimate(y)
        # the filter can overshoot a saturated vane by a hair; keep it physical
        gi = [m.i_G(i) for i in range(m.n)]
        x_hat = x_hat.copy()
        x_hat[gi] = np.clip(x_hat[gi], 1e-6, 1.0)
        dP_imb = self._imbalance(x_hat, float(meas["dw"]))
        try:
            op = OperatingPoint(x=x_hat, u=self.u_prev, d=d_hat)
            lm = linear_model_at(m, op, cfg.dt_ctrl)
            self._aug = augment_with_disturbance(lm)
            cons = build_constraint_set(m, x_hat, self.u_prev, cfg.N, cfg.N_c, cfg.dt_ctrl,
                                        printed_form=cfg.printed_form, speed_margin=cfg.speed_margin)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                refs = self.references(x_hat, dP_imb)
            prob = build_qp(lm, cons, x_hat, refs, cfg)
            out = solve_qp(prob, self.u_prev, self.P_set)
        except (InfeasibleQP, MaxIterations, VspsError, np.linalg.LinAlgError) as exc:
            self.failures += 1
            U = np.tile(self.u_prev, (cfg.N_c, 1))
            out = ControlOutput(dU=np.zeros_like(U), P_star=U[:, 0::2], G_star=U[:, 1::2],
                                dP_star=U[:, 0::2] - self.P_set[None, :], objective=float("nan"),
                                kkt_residual=float("nan"), active=[], slack={}, status="latched",
                                message=str(exc))
        # the QP meets the hard vane rows to roundoff; make the emitted command exact
        for i, p in enumerate(m.units):
            g_prev = self.u_prev[m.i_Gstar(i)]
            du = p.G_rate_max * cfg.dt_ctrl
            lo = max(max(p.G_min, 0.0), g_prev - du)
            hi = min(1.0, g_prev + du)
            out.G_star[0, i] = min(max(out.G_star[0, i], lo), hi)
        self.u_prev = np.ravel(np.column_stack([out.P_star[0], out.G_star[0]]))
        self.cycles += 1
        self.last = out
        return out

    def command(self, meas):
        """Controller interface used by the scenario runner: ``(P*, G*)``."""
        out = self.control_cycle(meas)
        return out.P_star[0].copy(), out.G_star[0].copy()
