import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsps_ampc.constraints import (
    LABELS,
    Row,
    UnitOperatingPoint,
    build_constraint_set,
    k_p2ur,
    k_ur2p,
    rotor_current_exact,
    rotor_current_row,
    rotor_voltage_dyn_row,
    rotor_voltage_exact,
    rotor_voltage_ss_row,
    stator_current_row,
    unit_limit_rows,
)
from vsps_ampc.errors import DegenerateOperatingPoint
from vsps_ampc.linearize import PredictionModel
from vsps_ampc.scenario import build_plant
from vsps_ampc.vsps_model import VspsUnitParams, dfim_algebra, rotor_d_coupling, stator_current_ratio_form, with_params

P = VspsUnitParams()
VARS = ("dP_e", "dw_PCC", "dw_r")


def admissible_ops(n, seed=0):
    rng = np.random.default_rng(seed)
    ops = []
    while len(ops) < n:
        op = UnitOperatingPoint(P_e=rng.uniform(0.2, 1.0), omega_PCC=rng.uniform(0.98, 1.02),
                                omega_r=rng.uniform(0.9, 1.1))
        if rotor_current_exact(op.P_e, op.omega_PCC, op.omega_r, P) <= P.I_rN and op.P_e <= op.omega_r:
            ops.append(op)
    return ops


def numeric_gradient(fun, op, h=1e-6):
    x = np.array([op.P_e, op.omega_PCC, op.omega_r])
    g = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        g[j] = (fun(*(x + e)) - fun(*(x - e))) / (2 * h)
    return g


def coef_vector(row):
    return np.array([row.coef.get(v, 0.0) for v in VARS])


def max_rel(a, b):
    scale = np.maximum(np.abs(a), np.abs(b))
    mask = scale > 1e-9
    return float(np.max(np.abs(a - b)[mask] / scale[mask]))


# -- rotor current -------------------------------------------------------------------

def test_rotor_current_zero_increment_slack():
    for op in admissible_ops(50):
        row = rotor_current_row(op, P)
        assert row.slack() == pytest.approx(P.I_rN - rotor_current_exact(op.P_e, op.omega_PCC, op.omega_r, P))
        assert row.slack() >= 0.0


def test_rotor_current_gradient():
    worst = 0.0
    for op in admissible_ops(100, seed=1):
        g = numeric_gradient(lambda *a: rotor_current_exact(*a, P), op)
        worst = max(worst, max_rel(coef_vector(rotor_current_row(op, P)), g))
    assert worst < 1e-2


def test_rotor_current_zero_direction_is_second_order():
    op = UnitOperatingPoint(P_e=0.7, omega_PCC=1.0, omega_r=0.95)
    c = coef_vector(rotor_current_row(op, P))
    v = np.cross(c, [1.0, 0.0, 0.0])
    v /= np.linalg.norm(v)
    x0 = np.array([op.P_e, op.omega_PCC, op.omega_r])
    I0 = rotor_current_exact(*x0, P)
    d1 = rotor_current_exact(*(x0 + 1e-2 * v), P) - I0
    d2 = rotor_current_exact(*(x0 + 5e-3 * v), P) - I0
    assert c @ v == pytest.approx(0.0, abs=1e-15)
    assert d1 / d2 == pytest.approx(4.0, rel=0.05)


def test_rotor_current_degenerate_op():
    op = UnitOperatingPoint(P_e=0.0, omega_PCC=1.0, omega_r=0.95)
    with pytest.raises(DegenerateOperatingPoint):
        rotor_current_row(op, P, fallback=False)
    row = rotor_current_row(op, P)
    g = numeric_gradient(lambda *a: rotor_current_exact(*a, P), op)
    assert np.allclose(coef_vector(row), g, atol=1e-8)


# -- stator current -------------------------------------------------------------------

def test_stator_row_on_limit():
    w = 0.95
    op = UnitOperatingPoint(P_e=P.I_sN * w, omega_PCC=1.0, omega_r=w)
    assert stator_current_row(op, P).rhs == pytest.approx(0.0, abs=1e-15)


def test_stator_zero_power():
    op = UnitOperatingPoint(P_e=0.0, omega_PCC=1.0, omega_r=0.95)
    assert dfim_algebra(op, 1.0, P).I_s == pytest.approx(0.0, abs=1e-15)
    row = stator_current_row(op, P)
    assert row.slack() == pytest.approx(P.I_sN * op.omega_r)


def test_stator_row_is_exact_boundary():
    """On the row's boundary the ratio-form stator current equals its rating."""
    for op in admissible_ops(100, seed=2):
        row = stator_current_row(op, P)
        g = numeric_gradient(lambda Pe, w, wr: Pe - P.I_sN * wr, op)
        assert max_rel(coef_vector(row), g) < 1e-6
        # move along dP_e to the boundary
        dP = row.rhs
        assert stator_current_ratio_form(op.P_e + dP, op.omega_r) == pytest.approx(P.I_sN, rel=1e-12)


# -- rotor voltage ---------------------------------------------------------------------

def test_rotor_voltage_zero_slip():
    op = UnitOperatingPoint(P_e=0.6, omega_PCC=1.0, omega_r=1.0)
    q = dfim_algebra(op, 1.0, P)
    assert q.u_r_amplitude == 0.0
    assert q.U_r_exact < 0.01 * P.U_rN
    slacks = [rotor_voltage_ss_row(UnitOperatingPoint(0.6, 1.0, w), P).slack() for w in np.linspace(0.9, 1.1, 41)]
    assert rotor_voltage_ss_row(op, P).slack() == pytest.approx(max(slacks))


def test_rotor_voltage_row_binding_band():
    """Where the steady-state row binds, the exact rotor voltage is 0.95..1 of its rating."""
    b_over_a = P.U_rN * P.L_m / (P.r_Ur * P.L_r)
    for w_r in (1.0 - b_over_a, 1.0 + b_over_a):
        for Pe in np.linspace(0.2, 1.0, 17):
            op = UnitOperatingPoint(P_e=Pe, omega_PCC=1.0, omega_r=w_r)
            assert rotor_voltage_ss_row(op, P).rhs == pytest.approx(0.0, abs=1e-12)
            U = rotor_voltage_exact(Pe, 1.0, w_r, P)
            assert 0.95 * P.U_rN <= U <= 1.0 * P.U_rN


def test_rotor_voltage_slack_shrinks_with_slip():
    for side in (-1.0, 1.0):
        slips = np.linspace(0.0, 0.12, 25)
        slack = [rotor_voltage_ss_row(UnitOperatingPoint(0.6, 1.0, 1.0 + side * s), P).slack() for s in slips]
        assert np.all(np.diff(slack) < 0.0)


def test_rotor_voltage_ss_gradient():
    """Row coefficients equal the gradient of w_PCC*(r_Ur*|D_rd| - U_rN)."""
    for op in admissible_ops(100, seed=3):
        row = rotor_voltage_ss_row(op, P)

        # r_Ur*|D_rd|*w_PCC*L_m = r_Ur*L_r*U_s*|w_PCC - w_r|, up to the constant L_m scale
        def g_fun(Pe, w, wr):
            return P.r_Ur * P.L_r * abs(w - wr) - P.U_rN * P.L_m * w

        g = numeric_gradient(g_fun, op)
        assert max_rel(coef_vector(row), g) < 1e-6
        assert row.rhs == pytest.approx(-g_fun(op.P_e, op.omega_PCC, op.omega_r), abs=1e-12)


def test_coupling_term_matches_slip_form():
    for w_r in (0.9, 0.97, 1.05):
        D = rotor_d_coupling(1.01, w_r, P)
        assert abs(D) == pytest.approx(abs(1.01 - w_r) * P.L_r / (P.L_m * 1.01), rel=1e-12)


# -- dynamic rotor voltage ------------------------------------------------------------------

def test_k_p2ur_branch_continuity():
    op = UnitOperatingPoint(0.6, 1.0, 0.95)
    p_eq = with_params(P, T_p=P.T_r)
    K = k_ur2p(op, p_eq)
    assert k_p2ur(op, p_eq) == pytest.approx(1.0 / K, rel=1e-15)
    lo = k_p2ur(op, with_params(P, T_p=P.T_r * (1 + 1e-9)))
    hi = k_p2ur(op, with_params(P, T_p=P.T_r * (1 - 1e-9)))
    assert lo == pytest.approx(hi, rel=1e-8)


@pytest.mark.parametrize("T_p", [0.02, 0.1, 0.5])
def test_k_p2ur_time_domain_oracle(T_p):
    """Invert the rotor-voltage-to-power lag along a lagged step of the command."""
    params = with_params(P, T_p=T_p)
    op = UnitOperatingPoint(0.6, 1.0, 0.95)
    K = k_ur2p(op, params)
    T_r = params.T_r
    dP = 0.1
    t = np.linspace(0.0, 10 * max(T_p, T_r), 200001)
    Pe = dP * (1.0 - np.exp(-t / T_p))
    dPe = np.gradient(Pe, t)
    u = (Pe + T_r * dPe) / K
    assert np.max(np.abs(u)) == pytest.approx(k_p2ur(op, params) * dP, rel=0.02)
    assert abs(np.max(np.abs(u)) - k_p2ur(op, params, printed_form=True) * dP) > 0.5 * np.max(np.abs(u))


def test_dyn_row_zero_command_step():
    for op in admissible_ops(30, seed=4):
        if rotor_voltage_ss_row(op, P).slack() < 0.0:
            continue
        row = rotor_voltage_dyn_row(op, P)
        assert row.slack(dP_star=0.0) >= 0.0


# -- rows and stacked set ----------------------------------------------------------------------

def test_rows_have_nonzero_coefficients_and_finite_rhs():
    for op in admissible_ops(20, seed=5):
        for r in unit_limit_rows(op, P):
            assert r.label in LABELS
            assert any(v != 0.0 for v in r.coef.values()) and np.isfinite(r.rhs)
    with pytest.raises(ValueError):
        Row(coef={"dP_e": 0.0}, rhs=1.0, label="rotor_current")
    with pytest.raises(ValueError):
        Row(coef={"dP_e": 1.0}, rhs=np.inf, label="rotor_current")


@given(Pe=st.floats(0.2, 1.0), w=st.floats(0.98, 1.02), wr=st.floats(0.9, 1.1))
@settings(max_examples=40)
def test_row_refresh_is_pure(Pe, w, wr):
    op = UnitOperatingPoint(Pe, w, wr)
    assert unit_limit_rows(op, P) == unit_limit_rows(op, P)


@pytest.fixture(scope="module")
def model_op(shipped):
    cfg = shipped["ampc"]
    plant = build_plant(cfg)
    model = PredictionModel(cfg.grid, [p for p, _ in cfg.units], cfg.chart, cfg.tunnel, [P_ for _, P_ in cfg.units])
    return model, plant.x.copy(), plant.u.copy()


def test_vane_box_binding_at_full_gate(model_op):
    model, x, u = model_op
    u = u.copy()
    u[model.i_Gstar(0)] = 1.0
    cs = build_constraint_set(model, x, u, 5, 3, 0.1)
    rows = [r for r, (lab, i, k) in enumerate(zip(cs.labels, cs.units, cs.steps))
            if lab == "vane_box" and i == 0 and cs.Au[r, model.i_Gstar(0)] == 1.0]
    assert cs.b[rows[0]] == 0.0


def test_speed_floor_forces_nonnegative_increments(model_op):
    model, x, u = model_op
    x = x.copy()
    p = model.units[0]
    x[model.i_wr(0)] = p.omega_r_min
    cs = build_constraint_set(model, x, u, 4, 2, 0.1)
    nx = model.nx
    for r in range(len(cs.b)):
        if cs.labels[r] == "speed_bound" and cs.units[r] == 0 and cs.Ax[r, (cs.steps[r] - 1) * nx + model.i_wr(0)] < 0:
            assert cs.b[r] == 0.0  # -dw_r(k) <= 0


def test_speed_margin_tightens_bounds(model_op):
    model, x, u = model_op
    a = build_constraint_set(model, x, u, 3, 1, 0.1)
    b = build_constraint_set(model, x, u, 3, 1, 0.1, speed_margin=0.05)
    sb = [r for r, lab in enumerate(a.labels) if lab == "speed_bound"]
    assert np.allclose(a.b[sb] - b.b[sb], 0.05)


def test_constant_vane_trajectory_satisfies_rate_rows(model_op):
    model, x, u = model_op
    N, N_c = 6, 4
    cs = build_constraint_set(model, x, u, N, N_c, 0.1)
    dU = np.zeros(N_c * model.nu)
    for k in range(N_c):
        dU[k * model.nu + model.i_Gstar(0)] = 0.3
        dU[k * model.nu + model.i_Gstar(1)] = -0.2
    lhs = cs.Au @ dU
    for r, (lab, k) in enumerate(zip(cs.labels, cs.steps)):
        if lab == "vane_rate" and k > 0:
            assert lhs[r] == 0.0


def test_soft_and_hard_labels(model_op):
    model, x, u = model_op
    cs = build_constraint_set(model, x, u, 3, 2, 0.1)
    for lab, fam in zip(cs.labels, cs.family):
        assert (fam >= 0) == (lab not in ("vane_box", "vane_rate"))
    assert cs.n_families == 5 * model.n
