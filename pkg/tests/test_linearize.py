import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vsps_ampc.errors import DegenerateOperatingPoint, DimensionMismatch
from vsps_ampc.linearize import (
    Jacobians,
    OperatingPoint,
    PredictionModel,
    compose,
    discretize,
    linear_model_at,
    linearize_at,
)
from vsps_ampc.scenario import build_plant


@pytest.fixture(scope="module")
def setup(shipped):
    cfg = shipped["ampc"]
    plant = build_plant(cfg)
    params = [p for p, _ in cfg.units]
    P_set = [P for _, P in cfg.units]
    model = PredictionModel(cfg.grid, params, cfg.chart, cfg.tunnel, P_set)
    return model, plant.x.copy(), plant.u.copy()


def perturbed_op(model, x0, u0, rng):
    x = x0.copy()
    x[0] += 0.003 * rng.standard_normal()
    x[1:model.base] += 0.05 * rng.standard_normal(model.base - 1)
    for i in range(model.n):
        x[model.i_wr(i)] += 0.03 * rng.standard_normal()
        x[model.i_pe(i)] += 0.05 * rng.standard_normal()
        x[model.i_G(i)] += 0.03 * rng.standard_normal()
        x[model.i_q(i)] += 0.02 * rng.standard_normal()
    u = u0 + 0.05 * rng.standard_normal(len(u0))
    return OperatingPoint(x=x, u=u, d=np.array([0.5 * rng.standard_normal()]))


def numeric_jacobians(model, op, h=1e-6):
    nx, nu = model.nx, model.nu
    A = np.zeros((nx, nx))
    B = np.zeros((nx, nu))
    for j in range(nx):
        e = np.zeros(nx)
        e[j] = h
        A[:, j] = (model.rhs(op.x + e, op.u, op.d) - model.rhs(op.x - e, op.u, op.d)) / (2 * h)
    for j in range(nu):
        e = np.zeros(nu)
        e[j] = h
        B[:, j] = (model.rhs(op.x, op.u + e, op.d) - model.rhs(op.x, op.u - e, op.d)) / (2 * h)
    E = ((model.rhs(op.x, op.u, op.d + h) - model.rhs(op.x, op.u, op.d - h)) / (2 * h))[:, None]
    return A, B, E


def assert_close_rel(an, fd, tol):
    scale = np.maximum(np.abs(an), np.abs(fd))
    big = scale > 1e-8
    assert np.all(np.abs(an - fd)[big] / scale[big] < tol)
    assert np.all(np.abs(an - fd)[~big] < 1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_jacobians_match_central_differences(setup, seed):
    model, x0, u0 = setup
    op = OperatingPoint(x=x0, u=u0, d=[0.0]) if seed == 0 else perturbed_op(model, x0, u0,
                                                                            np.random.default_rng(seed))
    jac = linearize_at(model, op)
    A, B, E = numeric_jacobians(model, op)
    assert_close_rel(jac.A, A, 1e-4)
    assert_close_rel(jac.B, B, 1e-4)
    assert_close_rel(jac.E, E, 1e-4)


def test_equilibrium_residual(setup):
    model, x0, u0 = setup
    jac = linearize_at(model, OperatingPoint(x=x0, u=u0, d=[0.0]))
    assert np.max(np.abs(jac.f0)) < 1e-10


def test_power_lag_diagonal(setup):
    model, x0, u0 = setup
    jac = linearize_at(model, OperatingPoint(x=x0, u=u0, d=[0.0]))
    for i, p in enumerate(model.units):
        assert jac.A[model.i_pe(i), model.i_pe(i)] == -1.0 / p.T_p


def test_prediction_model_matches_plant_rhs(shipped, setup):
    model, x0, u0 = setup
    plant = build_plant(shipped["ampc"])
    rng = np.random.default_rng(3)
    op = perturbed_op(model, x0, u0, rng)
    # keep the servo away from its slew limit so both models are smooth
    u = op.u.copy()
    for i in range(model.n):
        u[model.i_Gstar(i)] = op.x[model.i_G(i)] + 0.01
    dx_plant, _, _ = plant.rhs(op.x, u, float(op.d[0]))
    assert np.allclose(model.rhs(op.x, u, op.d), dx_plant, rtol=1e-12, atol=1e-12)


def test_outside_chart_is_degenerate(setup):
    model, x0, u0 = setup
    x = x0.copy()
    x[model.i_wr(0)] = 1.5
    with pytest.raises(DegenerateOperatingPoint):
        linearize_at(model, OperatingPoint(x=x, u=u0, d=[0.0]))


def test_operating_point_must_be_finite(setup):
    model, x0, u0 = setup
    x = x0.copy()
    x[3] = np.nan
    with pytest.raises(DegenerateOperatingPoint):
        OperatingPoint(x=x, u=u0, d=[0.0])


def test_wrong_dimension(setup):
    model, x0, u0 = setup
    with pytest.raises(DimensionMismatch):
        linearize_at(model, OperatingPoint(x=x0[:-1], u=u0, d=[0.0]))


def _jac(A, B, f0=None):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    n = A.shape[0]
    return Jacobians(A=A, B=B, E=np.zeros((n, 1)), f0=np.zeros(n) if f0 is None else f0,
                     x_op=np.zeros(n), u_op=np.zeros(B.shape[1]), d_op=np.zeros(1))


def test_scalar_exponential():
    tau, dt = 0.7, 0.1
    lm = discretize(_jac([[-1.0 / tau]], [[1.0 / tau]]), dt)
    assert abs(lm.A[0, 0] - math.exp(-dt / tau)) <= 1e-12
    assert abs(lm.B[0, 0] - (1.0 - math.exp(-dt / tau))) <= 1e-12


def test_pure_integrator():
    lm = discretize(_jac([[0.0]], [[1.0]]), 0.25)
    assert lm.A[0, 0] == 1.0
    assert lm.B[0, 0] == pytest.approx(0.25, abs=1e-15)


def test_affine_drift_discretized_exactly():
    # dx/dt = -x + 1 from 0: x(dt) = 1 - exp(-dt)
    lm = discretize(_jac([[-1.0]], [[0.0]], f0=np.array([1.0])), 0.3)
    assert lm.f0[0] == pytest.approx(1.0 - math.exp(-0.3), abs=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_semigroup(setup, seed):
    model, x0, u0 = setup
    op = perturbed_op(model, x0, u0, np.random.default_rng(10 + seed))
    jac = linearize_at(model, op)
    full = discretize(jac, 0.1)
    half = discretize(jac, 0.05)
    two = compose(half, half)
    for name in ("A", "B", "E", "f0"):
        assert np.max(np.abs(getattr(full, name) - getattr(two, name))) < 1e-9


@pytest.mark.parametrize("dPs, dGs", [(0.05, 0.05), (-0.05, 0.05), (0.05, -0.05), (-0.05, -0.05), (0.0, 0.02)])
def test_one_step_linearization_error(setup, dPs, dGs):
    model, x0, u0 = setup
    op = OperatingPoint(x=x0, u=u0, d=[0.0])
    dt = 0.1
    lm = linear_model_at(model, op, dt)
    u = u0.copy()
    u[0::2] += dPs
    u[1::2] += dGs
    sol = solve_ivp(lambda t, x: model.rhs(x, u, op.d), (0.0, dt), x0, method="RK45", rtol=1e-12, atol=1e-14)
    x_true = sol.y[:, -1]
    x_lin = lm.step(x0, u)
    assert np.max(np.abs(x_lin - x_true)) < 1e-3


def test_linear_model_measurement_matrix(setup):
    model, x0, u0 = setup
    lm = linear_model_at(model, OperatingPoint(x=x0, u=u0, d=[0.0]), 0.1)
    y = lm.C @ x0
    assert y[0] == x0[0]
    assert y[1] == x0[model.i_wr(0)]
    assert lm.C.shape == (1 + 3 * model.n, model.nx)
