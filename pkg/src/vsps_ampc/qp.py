"""Dense strictly convex QP solver (Goldfarb-Idnani dual active set).

Solves::

    minimize    0.5 x'Hx + g'x
    subject to  A_eq x  = b_eq
                A_in x <= b_in

with ``H`` symmetric positive definite.  The dual method starts from the
unconstrained minimizer and adds violated constraints one at a time while
keeping dual feasibility, so it needs no feasible starting point and detects
infeasibility.  The factorization ``J = L^-T Q`` and the upper-triangular
``R`` are updated with Givens rotations on every add/drop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import DimensionMismatch, InfeasibleQP, MaxIterations


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    lam_in: np.ndarray
    lam_eq: np.ndarray
    active: np.ndarray  # indices of active inequality rows
    iterations: int
    residuals: dict


def kkt_residuals(H, g, x, A_in=None, b_in=None, lam_in=None, A_eq=None, b_eq=None, lam_eq=None):
    """Relative stationarity, feasibility and complementarity residuals."""
    n = len(x)
    A_in = np.zeros((0, n)) if A_in is None else A_in
    b_in = np.zeros(0) if b_in is None else b_in
    lam_in = np.zeros(len(b_in)) if lam_in is None else lam_in
    A_eq = np.zeros((0, n)) if A_eq is None else A_eq
    b_eq = np.zeros(0) if b_eq is None else b_eq
    lam_eq = np.zeros(len(b_eq)) if lam_eq is None else lam_eq
    grad = H @ x + g
    stat = grad + A_in.T @ lam_in + A_eq.T @ lam_eq
    scale = 1.0 + max(np.max(np.abs(g), initial=0.0), np.max(np.abs(H @ x), initial=0.0))
    viol_in = np.maximum(A_in @ x - b_in, 0.0)
    viol_eq = np.abs(A_eq @ x - b_eq)
    bscale = 1.0 + max(np.max(np.abs(b_in), initial=0.0), np.max(np.abs(b_eq), initial=0.0))
    slack = b_in - A_in @ x
    comp = np.abs(lam_in * slack)
    cscale = 1.0 + np.max(np.abs(lam_in), initial=0.0) * bscale
    return {
        "stationarity": float(np.max(np.abs(stat), initial=0.0) / scale),
        "primal": float(max(np.max(viol_in, initial=0.0), np.max(viol_eq, initial=0.0)) / bscale),
        "dual": float(max(-np.min(lam_in, initial=0.0), 0.0)),
        "complementarity": float(np.max(comp, initial=0.0) / cscale),
    }


def _add_constraint(R, J, d, iq):
    """Rotate ``d`` so entries past ``iq`` vanish; append it as column ``iq`` of R."""
    n = J.shape[0]
    for j in range(n - 1, iq, -1):
        cc, ss = d[j - 1], d[j]
        h = np.hypot(cc, ss)
        if h == 0.0:
            continue
        d[j] = 0.0
        ss /= h
        cc /= h
        if cc < 0.0:
            cc, ss = -cc, -ss
            d[j - 1] = -h
        else:
            d[j - 1] = h
        xny = ss / (1.0 + cc)
        t1 = J[:, j - 1].copy()
        t2 = J[:, j].copy()
        J[:, j - 1] = t1 * cc + t2 * ss
        J[:, j] = xny * (t1 + J[:, j - 1]) - t2
    R[:iq + 1, iq] = d[:iq + 1]


def _drop_constraint(R, J, iq, pos):
    """Remove active column ``pos`` and restore triangularity of R."""
    n = J.shape[0]
    R[:, pos:iq - 1] = R[:, pos + 1:iq]
    R[:, iq - 1] = 0.0
    iq -= 1
    for j in range(pos, iq):
        cc, ss = R[j, j], R[j + 1, j]
        h = np.hypot(cc, ss)
        if h == 0.0:
            continue
        cc /= h
        ss /= h
        R[j + 1, j] = 0.0
        if cc < 0.0:
            R[j, j] = -h
            cc, ss = -cc, -ss
        else:
            R[j, j] = h
        xny = ss / (1.0 + cc)
        if j + 1 < iq:
            t1 = R[j, j + 1:iq].copy()
            t2 = R[j + 1, j + 1:iq].copy()
            R[j, j + 1:iq] = t1 * cc + t2 * ss
            R[j + 1, j + 1:iq] = xny * (t1 + R[j, j + 1:iq]) - t2
        t1 = J[:, j].copy()
        t2 = J[:, j + 1].copy()
        J[:, j] = t1 * cc + t2 * ss
        J[:, j + 1] = xny * (J[:, j] + t1) - t2
    return iq


def solve_qp(H, g, A_in=None, b_in=None, A_eq=None, b_eq=None, max_iter=None, tol=1e-12):
    """Solve the QP above; returns a :class:`QPResult`.

    Raises
    ------
    InfeasibleQP
        The constraints admit no point (detected through an unbounded dual step).
    MaxIterations
        Iteration cap hit; ``exc.result`` carries the current iterate.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = len(g)
    if H.shape != (n, n):
        raise DimensionMismatch("Hessian and gradient sizes differ")
    A_in = np.zeros((0, n)) if A_in is None else np.atleast_2d(np.asarray(A_in, dtype=float))
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if A_in.shape != (len(b_in), n) or A_eq.shape != (len(b_eq), n):
        raise DimensionMismatch("constraint matrix and rhs sizes differ")
    m_eq, m_in = len(b_eq), len(b_in)
    if max_iter is None:
        max_iter = 50 * (n + m_in + m_eq) + 100

    # GI works with rows n_i'x >= b_i; equalities come first in the index space.
    Nmat = np.vstack([A_eq, -A_in])
    bvec = np.concatenate([b_eq, -b_in])
    norms = np.maximum(np.linalg.norm(Nmat, axis=1), 1e-300)

    cf = cho_factor(H, lower=True)
    Lc = np.tril(cf[0])
    J = solve_triangular(Lc, np.eye(n), lower=True).T  # L^-T
    R = np.zeros((n, n))
    x = -cho_solve(cf, g)
    active = []   # constraint indices in Nmat
    u = np.zeros(0)
    iq = 0
    eps = np.finfo(float).eps
    it = 0

    def result(xv, uv, act, its):
        lam_eq = np.zeros(m_eq)
        lam_in = np.zeros(m_in)
        for k, c in enumerate(act):
            if c < m_eq:
                lam_eq[c] = -uv[k]
            else:
                lam_in[c - m_eq] = uv[k]
        res = kkt_residuals(H, g, xv, A_in, b_in, lam_in, A_eq, b_eq, lam_eq)
        obj = float(0.5 * xv @ H @ xv + g @ xv)
        act_in = np.array(sorted(c - m_eq for c in act if c >= m_eq), dtype=int)
        return QPResult(x=xv, objective=obj, lam_in=lam_in, lam_eq=lam_eq, active=act_in,
                        iterations=its, residuals=res)

    def step_directions(p):
        d = J.T @ Nmat[p]
        z = J[:, iq:] @ d[iq:]
        r = solve_triangular(R[:iq, :iq], d[:iq]) if iq > 0 else np.zeros(0)
        return d, z, r

    # equality constraints: full steps, never dropped
    for p in range(m_eq):
        d, z, r = step_directions(p)
        zn = z @ Nmat[p]
        if abs(zn) <= eps * norms[p] * max(1.0, np.linalg.norm(z)):
            if abs(Nmat[p] @ x - bvec[p]) > 1e-9 * (1.0 + abs(bvec[p])):
                raise InfeasibleQP("inconsistent or dependent equality constraints")
            continue
        t2 = (bvec[p] - Nmat[p] @ x) / zn
        x = x + t2 * z
        u = np.concatenate([u - t2 * r, [t2]])
        _add_constraint(R, J, d.copy(), iq)
        iq += 1
        active.append(p)

    while True:
        it += 1
        if it > max_iter:
            raise MaxIterations("QP iteration cap reached", result=result(x, u, active, it))
        s = Nmat[m_eq:] @ x - bvec[m_eq:]
        s_scaled = s / norms[m_eq:]
        if len(active) > m_eq:
            s_scaled[np.array([c - m_eq for c in active if c >= m_eq])] = np.inf
        if m_in == 0:
            break
        k = int(np.argmin(s_scaled))
        if s_scaled[k] >= -tol * (1.0 + np.max(np.abs(x), initial=0.0)):
            break
        p = m_eq + k
        u_plus = np.concatenate([u, [0.0]])
        while True:
            d, z, r = step_directions(p)
            # partial (dual) step length over active inequalities
            t1 = np.inf
            l_pos = -1
            for kk in range(iq):
                if active[kk] >= m_eq and r[kk] > 0.0:
                    ratio = u_plus[kk] / r[kk]
                    if ratio < t1:
                        t1 = ratio
                        l_pos = kk
            zn = z @ Nmat[p]
            if np.linalg.norm(z) > eps * 1e3 * norms[p] and zn > 0.0:
                t2 = -(Nmat[p] @ x - bvec[p]) / zn
            else:
                t2 = np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise InfeasibleQP(f"inequality row {p - m_eq} cannot be satisfied")
            if not np.isfinite(t2):
                u_plus[:iq] -= t * r
                u_plus[iq] += t
                active.pop(l_pos)
                u_plus = np.delete(u_plus, l_pos)
                iq = _drop_constraint(R, J, iq, l_pos)
                continue
            x = x + t * z
            u_plus[:iq] -= t * r
            u_plus[iq] += t
            if t == t2:
                _add_constraint(R, J, d.copy(), iq)
                iq += 1
                active.append(p)
                u = u_plus
                break
            active.pop(l_pos)
            u_plus = np.delete(u_plus, l_pos)
            iq = _drop_constraint(R, J, iq, l_pos)
            it += 1
            if it > max_iter:
                raise MaxIterations("QP iteration cap reached", result=result(x, u_plus[:iq], active, it))

    return result(x, u, active, it)
