"""Kalman filter producing the operating-point estimate each control cycle.

The filter runs on the discrete affine model of :mod:`linearize`, refreshed
every cycle.  The load disturbance is appended to the state as a random walk
so the filter also estimates it; see :func:`augment_with_disturbance`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, SingularInnovation
from .linearize import LinearModel


@dataclass(frozen=True)
class EstimatorState:
    x_hat: np.ndarray
    P_cov: np.ndarray
    Q_proc: np.ndarray
    R_meas: np.ndarray

    def __post_init__(self):
        n = len(self.x_hat)
        if self.P_cov.shape != (n, n) or self.Q_proc.shape != (n, n):
            raise DimensionMismatch("covariance shapes do not match the state")
        if self.R_meas.ndim != 2 or self.R_meas.shape[0] != self.R_meas.shape[1]:
            raise DimensionMismatch("R_meas must be square")


def initial_state(x0, P0=1e-6, Q_proc=1e-6, R_meas=1e-8, n_y=None):
    """Estimator state with scalar-times-identity covariances (or full matrices)."""
    x0 = np.asarray(x0, dtype=float).copy()
    n = len(x0)

    def mat(v, k):
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            return float(v) * np.eye(k)
        if v.ndim == 1:
            return np.diag(v)
        return v.copy()

    R = mat(R_meas, n if n_y is None else n_y)
    return EstimatorState(x_hat=x0, P_cov=mat(P0, n), Q_proc=mat(Q_proc, n), R_meas=R)


def predict(est: EstimatorState, model: LinearModel, u, d=None) -> EstimatorState:
    """Time update ``x <- A x + B u + f0`` (in the model's deviation frame)."""
    u = np.asarray(u, dtype=float)
    if len(est.x_hat) != model.nx or u.shape != (model.nu,):
        raise DimensionMismatch(
            f"estimator has {len(est.x_hat)} states and got {u.shape} inputs; model is {model.nx}x{model.nu}")
    x = model.step(est.x_hat, u, d)
    A = model.A
    P = A @ est.P_cov @ A.T + est.Q_proc
    P = 0.5 * (P + P.T)
    return replace(est, x_hat=x, P_cov=P)


def update(est: EstimatorState, y, C, R_meas=None) -> EstimatorState:
    """Measurement update with the Joseph-form covariance."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = est.R_meas if R_meas is None else np.atleast_2d(np.asarray(R_meas, dtype=float))
    n = len(est.x_hat)
    if C.shape != (len(y), n) or R.shape != (len(y), len(y)):
        raise DimensionMismatch(f"measurement shapes inconsistent: y {y.shape}, C {C.shape}, R {R.shape}")
    P = est.P_cov
    S = C @ P @ C.T + R
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is not positive definite") from exc
    if np.min(np.diag(L)) <= 1e-150:
        raise SingularInnovation("innovation covariance is singular")
    # K = P C' S^-1
    K = np.linalg.solve(L.T, np.linalg.solve(L, C @ P)).T
    x = est.x_hat + K @ (y - C @ est.x_hat)
    IKC = np.eye(n) - K @ C
    P = IKC @ P @ IKC.T + K @ R @ K.T
    P = 0.5 * (P + P.T)
    return replace(est, x_hat=x, P_cov=P)


def augment_with_disturbance(model: LinearModel) -> LinearModel:
    """Append the disturbance as a constant (random-walk) state.

    The augmented state is ``[x, d]`` and the augmented model has no
    disturbance input of its own.
    """
    nx, nd = model.nx, model.E.shape[1]
    A = np.block([[model.A, model.E], [np.zeros((nd, nx)), np.eye(nd)]])
    B = np.vstack([model.B, np.zeros((nd, model.nu))])
    C = np.hstack([model.C, np.zeros((model.C.shape[0], nd))])
    f0 = np.concatenate([model.f0, np.zeros(nd)])
    return LinearModel(A=A, B=B, E=np.zeros((nx + nd, 0)), C=C, f0=f0, dt=model.dt,
                       x_op=np.concatenate([model.x_op, model.d_op]), u_op=model.u_op, d_op=np.zeros(0))


def riccati_fixed_point(A, C, Q, R, P0=None, tol=1e-13, max_iter=100000):
    """Iterate the predicted-covariance Riccati recursion to its fixed point."""
    P = np.eye(A.shape[0]) if P0 is None else P0.copy()
    for _ in range(max_iter):
        S = C @ P @ C.T + R
        K = A @ P @ C.T @ np.linalg.inv(S)
        Pn = A @ P @ A.T + Q - K @ S @ K.T
        Pn = 0.5 * (Pn + Pn.T)
        if np.max(np.abs(Pn - P)) <= tol * max(1.0, np.max(np.abs(P))):
            return Pn
        P = Pn
    return P
