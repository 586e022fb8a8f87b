"""Equivalent linear operating constraints of a VSPS unit.

Each limit of the doubly fed machine (rotor current, stator current, rotor
voltage in steady state and during power ramps) is replaced by one linear row
in deviations from the current operating point.  Rows are rebuilt every
control cycle, so only local accuracy matters.  The exact nonlinear quantities
in :func:`vsps_model.dfim_algebra` serve as the oracle.

Row variables (all deviations from the operating point)::

    dP_e, dw_PCC, dw_r     electrical power, grid speed, rotor speed
    dP_star                per-cycle increment of the power command
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Sequence

import numpy as np

from .errors import DegenerateOperatingPoint, DimensionMismatch
from .vsps_model import U_S, VspsUnitParams, dfim_algebra

LABELS = ("rotor_current", "stator_current", "rotor_voltage_ss", "rotor_voltage_dyn",
          "speed_bound", "vane_box", "vane_rate")
SOFT_LABELS = ("rotor_current", "stator_current", "rotor_voltage_ss", "rotor_voltage_dyn", "speed_bound")


@dataclass(frozen=True)
class UnitOperatingPoint:
    """Per-unit slice of the operating point used by the limit rows."""

    P_e: float
    omega_PCC: float
    omega_r: float

    def __post_init__(self):
        if not (self.omega_PCC > 0.0 and self.omega_r > 0.0):
            raise DegenerateOperatingPoint("speeds must be positive")


@dataclass(frozen=True)
class Row:
    """``sum(coef[v] * v) <= rhs`` over the row variables named above."""

    coef: dict
    rhs: float
    label: str
    unit: int = 0

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown row label {self.label!r}")
        if not any(v != 0.0 for v in self.coef.values()):
            raise ValueError("row has no nonzero coefficient")
        if not np.isfinite(self.rhs):
            raise ValueError("row rhs is not finite")

    def value(self, **deltas):
        return sum(c * deltas.get(k, 0.0) for k, c in self.coef.items())

    def slack(self, **deltas):
        return self.rhs - self.value(**deltas)


# -- exact limit expressions ----------------------------------------------------

def rotor_current_exact(P_e, omega_PCC, omega_r, params, U_s=U_S):
    return dfim_algebra(SimpleNamespace(P_e=P_e, omega_r=omega_r), omega_PCC, params, U_s).I_r


def stator_current_exact(P_e, omega_PCC, omega_r, params, U_s=U_S):
    return dfim_algebra(SimpleNamespace(P_e=P_e, omega_r=omega_r), omega_PCC, params, U_s).I_s


def rotor_voltage_exact(P_e, omega_PCC, omega_r, params, U_s=U_S, dP_e_dt=0.0):
    return dfim_algebra(SimpleNamespace(P_e=P_e, omega_r=omega_r), omega_PCC, params, U_s, dP_e_dt).U_r_exact


def _numeric_row(fun, op: UnitOperatingPoint, limit, label, unit, step=1e-6):
    base = np.array([op.P_e, op.omega_PCC, op.omega_r])
    grad = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = step
        grad[j] = (fun(*(base + e)) - fun(*(base - e))) / (2.0 * step)
    coef = {"dP_e": grad[0], "dw_PCC": grad[1], "dw_r": grad[2]}
    coef = {k: float(v) for k, v in coef.items() if v != 0.0}
    return Row(coef=coef, rhs=float(limit - fun(*base)), label=label, unit=unit)


# -- rows -----------------------------------------------------------------------

def rotor_current_row(op: UnitOperatingPoint, params: VspsUnitParams, U_s=U_S, unit=0, fallback=True):
    """Linearized ``I_r <= I_rN``.

    With ``K_ir = i_rd**2 / I_r`` the per-unit gradient of the rotor current is
    ``(K_ir/P_e, -U_s**2/(I_r*w_PCC**3*L_m**2) + K_ir/w_PCC, -K_ir/w_r)``.
    At zero power the first entry is 0/0; with ``fallback`` the row is then
    built from central differences of the exact current, otherwise
    :class:`DegenerateOperatingPoint` is raised.
    """
    q = dfim_algebra(op, op.omega_PCC, params, U_s)
    if op.P_e == 0.0 or q.I_r == 0.0:
        if not fallback:
            raise DegenerateOperatingPoint("rotor-current row needs P_eo != 0 and I_ro != 0")
        return _numeric_row(lambda P, w, wr: rotor_current_exact(P, w, wr, params, U_s), op,
                            params.I_rN, "rotor_current", unit)
    K_ir = q.i_rd ** 2 / q.I_r
    coef = {
        "dP_e": K_ir / op.P_e,
        "dw_PCC": -U_s ** 2 / (q.I_r * op.omega_PCC ** 3 * params.L_m ** 2) + K_ir / op.omega_PCC,
        "dw_r": -K_ir / op.omega_r,
    }
    return Row(coef=coef, rhs=params.I_rN - q.I_r, label="rotor_current", unit=unit)


def stator_current_row(op: UnitOperatingPoint, params: VspsUnitParams, U_s=U_S, unit=0):
    """``I_s = P_e/(U_s*w_r) <= I_sN`` rearranged into the exact linear row
    ``dP_e - I_sN*U_s*dw_r <= -P_eo + I_sN*U_s*w_ro``."""
    if op.omega_r <= 0.0:
        raise DegenerateOperatingPoint("rotor speed must be positive")
    k = params.I_sN * U_s
    return Row(coef={"dP_e": 1.0, "dw_r": -k}, rhs=-op.P_e + k * op.omega_r, label="stator_current", unit=unit)


def rotor_voltage_ss_row(op: UnitOperatingPoint, params: VspsUnitParams, U_s=U_S, unit=0):
    """Linearized ``r_Ur*|D_rd| <= U_rN`` with ``|D_rd| = |w_PCC - w_r|*U_s*L_r/(L_m*w_PCC)``.

    Exactly linear once multiplied through by ``w_PCC``.  The sign of the slip
    at the operating point picks the active branch of the absolute value, so
    the row also holds above synchronous speed.
    """
    p = params
    s = 1.0 if op.omega_PCC >= op.omega_r else -1.0
    a = p.r_Ur * p.L_r * U_s
    b = p.U_rN * p.L_m
    coef = {"dw_PCC": s * a - b, "dw_r": -s * a}
    rhs = -(s * a - b) * op.omega_PCC + s * a * op.omega_r
    return Row(coef=coef, rhs=rhs, label="rotor_voltage_ss", unit=unit)


def k_ur2p(op: UnitOperatingPoint, params: VspsUnitParams, U_s=U_S):
    """Static gain from d-axis rotor voltage to electrical power."""
    return U_s * params.L_m * op.omega_r / (params.R_r * params.L_s * op.omega_PCC)


def k_p2ur(op: UnitOperatingPoint, params: VspsUnitParams, U_s=U_S, printed_form=False):
    """Peak rotor-voltage excursion per unit step of the power command.

    The electrical power follows the command through a lag ``T_p`` and the
    rotor current answers the voltage through ``T_r``; inverting the latter
    gives a peak of ``max(T_r/T_p, 1)/K_Ur2P`` per unit command step.
    ``printed_form`` multiplies by ``K_Ur2P`` instead, which is dimensionally
    a power-per-voltage gain; it is kept only for comparison.
    """
    ratio = max(params.T_r / params.T_p, 1.0)
    K = k_ur2p(op, params, U_s)
    return K * ratio if printed_form else ratio / K


def rotor_voltage_dyn_row(op: UnitOperatingPoint, params: VspsUnitParams, U_s=U_S, unit=0, printed_form=False):
    """``K_P2Ur * dP_star <= U_rN - U_ro`` on the per-cycle command increment.

    Raising power pushes the d-axis rotor voltage in the direction of its
    slip-dependent part, so the row is signed by the slip at the operating
    point.
    """
    if params.T_p <= 0.0 or params.T_r <= 0.0:
        raise ValueError("time constants must be positive")
    q = dfim_algebra(op, op.omega_PCC, params, U_s)
    s = 1.0 if op.omega_PCC >= op.omega_r else -1.0
    return Row(coef={"dP_star": s * k_p2ur(op, params, U_s, printed_form)}, rhs=params.U_rN - q.u_r_amplitude,
               label="rotor_voltage_dyn", unit=unit)


def unit_limit_rows(op: UnitOperatingPoint, params: VspsUnitParams, U_s=U_S, unit=0, printed_form=False):
    return [
        rotor_current_row(op, params, U_s, unit),
        stator_current_row(op, params, U_s, unit),
        rotor_voltage_ss_row(op, params, U_s, unit),
        rotor_voltage_dyn_row(op, params, U_s, unit, printed_form),
    ]


# -- stacked trajectory constraints -----------------------------------------------

@dataclass
class ConstraintSet:
    """Stacked linear inequalities over a prediction horizon::

        Ax @ dX + Au @ dU <= b

    ``dX`` stacks state deviations at steps 1..N and ``dU`` stacks input
    deviations (from the previous command) at steps 0..N_c-1.  Rows whose
    label is soft may be relaxed by the slack family ``family[r]``; hard rows
    have ``family[r] == -1``.
    """

    Ax: np.ndarray
    Au: np.ndarray
    b: np.ndarray
    labels: list
    units: list
    steps: list
    family: np.ndarray
    n_families: int
    family_names: list = field(default_factory=list)

    def __post_init__(self):
        r = len(self.b)
        if self.Ax.shape[0] != r or self.Au.shape[0] != r or len(self.labels) != r or len(self.family) != r:
            raise DimensionMismatch("constraint arrays disagree on the row count")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("non-finite constraint rhs")

    @property
    def soft(self):
        return self.family >= 0

    def residual(self, dX, dU):
        """``b - Ax dX - Au dU``; non-negative where satisfied."""
        return self.b - self.Ax @ dX - self.Au @ dU


def build_constraint_set(model, x_op, u_op, N, N_c, dt_pred, U_s=U_S, printed_form=False,
                         rows_per_step: Sequence[str] = SOFT_LABELS, speed_margin=0.0):
    """Limit rows of every unit at every prediction step plus actuator rows.

    ``model`` is a :class:`linearize.PredictionModel`; ``x_op`` and ``u_op``
    are the absolute state and previous command around which the deviations
    are taken.  ``speed_margin`` tightens both speed bounds inward.
    """
    if N < 1 or not 1 <= N_c <= N:
        raise ValueError("need N >= 1 and 1 <= N_c <= N")
    x_op = np.asarray(x_op, dtype=float)
    u_op = np.asarray(u_op, dtype=float)
    nx, nu = model.nx, model.nu
    if x_op.shape != (nx,) or u_op.shape != (nu,):
        raise DimensionMismatch("operating point does not match the model")
    Ax_rows, Au_rows, b, labels, units, steps, fam = [], [], [], [], [], [], []
    fam_index = {}

    def family_of(label, i):
        if label not in SOFT_LABELS:
            return -1
        key = (label, i)
        if key not in fam_index:
            fam_index[key] = len(fam_index)
        return fam_index[key]

    def add(ax, au, rhs, label, i, k):
        Ax_rows.append(ax)
        Au_rows.append(au)
        b.append(rhs)
        labels.append(label)
        units.append(i)
        steps.append(k)
        fam.append(family_of(label, i))

    w_pcc = 1.0 + x_op[0]
    for i, p in enumerate(model.units):
        jw, jp, jg = model.i_wr(i), model.i_pe(i), model.i_G(i)
        jP, jG = model.i_Pstar(i), model.i_Gstar(i)
        op = UnitOperatingPoint(P_e=float(x_op[jp]), omega_PCC=float(w_pcc), omega_r=float(x_op[jw]))
        limit = [r for r in unit_limit_rows(op, p, U_s, i, printed_form) if r.label in rows_per_step]
        for r in limit:
            if r.label == "rotor_voltage_dyn":
                c = r.coef["dP_star"]
                for k in range(N_c):
                    au = np.zeros(N_c * nu)
                    au[k * nu + jP] = c
                    if k > 0:
                        au[(k - 1) * nu + jP] = -c
                    add(np.zeros(N * nx), au, r.rhs, r.label, i, k)
                continue
            for k in range(1, N + 1):
                ax = np.zeros(N * nx)
                off = (k - 1) * nx
                ax[off + jp] += r.coef.get("dP_e", 0.0)
                ax[off + 0] += r.coef.get("dw_PCC", 0.0)
                ax[off + jw] += r.coef.get("dw_r", 0.0)
                add(ax, np.zeros(N_c * nu), r.rhs, r.label, i, k)
        if "speed_bound" in rows_per_step:
            for k in range(1, N + 1):
                ax = np.zeros(N * nx)
                ax[(k - 1) * nx + jw] = 1.0
                add(ax, np.zeros(N_c * nu), p.omega_r_max - speed_margin - x_op[jw], "speed_bound", i, k)
                add(-ax, np.zeros(N_c * nu), x_op[jw] - p.omega_r_min - speed_margin, "speed_bound", i, k)
        # vane command box and slew rows, hard
        G_lo = max(p.G_min, 0.0)
        for k in range(N_c):
            au = np.zeros(N_c * nu)
            au[k * nu + jG] = 1.0
            add(np.zeros(N * nx), au, 1.0 - u_op[jG], "vane_box", i, k)
            add(np.zeros(N * nx), -au, u_op[jG] - G_lo, "vane_box", i, k)
            du = p.G_rate_max * dt_pred
            au = np.zeros(N_c * nu)
            au[k * nu + jG] = 1.0
            if k > 0:
                au[(k - 1) * nu + jG] = -1.0
            add(np.zeros(N * nx), au, du, "vane_rate", i, k)
            add(np.zeros(N * nx), -au, du, "vane_rate", i, k)

    names = [f"{lab}[{i}]" for (lab, i) in fam_index]
    return ConstraintSet(
        Ax=np.array(Ax_rows).reshape(-1, N * nx),
        Au=np.array(Au_rows).reshape(-1, N_c * nu),
        b=np.array(b, dtype=float),
        labels=labels,
        units=units,
        steps=steps,
        family=np.array(fam, dtype=int),
        n_families=len(fam_index),
        family_names=names,
    )
