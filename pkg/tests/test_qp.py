import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsps_ampc.errors import DimensionMismatch, InfeasibleQP, MaxIterations
from vsps_ampc.qp import kkt_residuals, solve_qp


def brute_force_qp(H, g, A, b):
    """Enumerate active sets; return the best KKT point (objective, x)."""
    n = len(g)
    m = len(b)
    best = (np.inf, None)
    for k in range(0, min(m, n) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            K = np.zeros((n + k, n + k))
            K[:n, :n] = H
            K[:n, n:] = A[S].T
            K[n:, :n] = A[S]
            rhs = np.concatenate([-g, b[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.any(A @ x - b > 1e-9) or np.any(lam < -1e-9):
                continue
            f = 0.5 * x @ H @ x + g @ x
            if f < best[0]:
                best = (f, x)
    return best


def random_qp(rng, n, m):
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    x_feas = rng.standard_normal(n)
    b = A @ x_feas + rng.uniform(0.0, 1.0, m)
    return H, g, A, b


def test_unconstrained_normal_equations():
    rng = np.random.default_rng(0)
    H, g, _, _ = random_qp(rng, 6, 0)
    res = solve_qp(H, g)
    assert np.allclose(res.x, np.linalg.solve(H, -g), atol=1e-10)


def test_two_variable_projection():
    # min 0.5*|x - (1, 1)|^2  s.t.  x1 + x2 <= 1  -> x = (0.5, 0.5), lambda = 0.5
    H = np.eye(2)
    g = np.array([-1.0, -1.0])
    res = solve_qp(H, g, np.array([[1.0, 1.0]]), np.array([1.0]))
    assert np.allclose(res.x, [0.5, 0.5], atol=1e-14)
    assert res.lam_in[0] == pytest.approx(0.5, abs=1e-14)
    assert list(res.active) == [0]


@pytest.mark.parametrize("seed", range(40))
def test_random_qps_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 11))
    m = int(rng.integers(1, 9))
    H, g, A, b = random_qp(rng, n, m)
    res = solve_qp(H, g, A, b)
    f_ref, _ = brute_force_qp(H, g, A, b)
    assert res.objective == pytest.approx(f_ref, abs=1e-8, rel=1e-8)
    r = kkt_residuals(H, g, res.x, A, b, res.lam_in)
    assert max(r["stationarity"], r["primal"], r["complementarity"]) < 1e-8
    assert r["dual"] <= 1e-12


@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(1, 10), m=st.integers(0, 12))
@settings(max_examples=40, deadline=None)
def test_kkt_residuals_small(seed, n, m):
    rng = np.random.default_rng(seed)
    H, g, A, b = random_qp(rng, n, m)
    res = solve_qp(H, g, A, b)
    r = kkt_residuals(H, g, res.x, A, b, res.lam_in)
    assert max(r["stationarity"], r["primal"], r["complementarity"]) < 1e-8


def test_equality_constraints():
    H = np.eye(3)
    g = np.zeros(3)
    res = solve_qp(H, g, A_eq=np.array([[1.0, 1.0, 1.0]]), b_eq=np.array([3.0]))
    assert np.allclose(res.x, [1.0, 1.0, 1.0], atol=1e-12)


def test_infeasible_detected():
    with pytest.raises(InfeasibleQP):
        solve_qp(np.eye(1), np.zeros(1), np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))


def test_iteration_cap_reports_iterate():
    rng = np.random.default_rng(7)
    H, g, A, b = random_qp(rng, 8, 12)
    b = b - 5.0 * np.abs(A).sum(axis=1)  # push many rows active
    try:
        full = solve_qp(H, g, A, b)
    except InfeasibleQP:
        pytest.skip("random instance infeasible")
    if full.iterations < 2:
        pytest.skip("instance too easy")
    with pytest.raises(MaxIterations) as exc:
        solve_qp(H, g, A, b, max_iter=1)
    assert exc.value.result is not None


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        solve_qp(np.eye(2), np.zeros(3))
    with pytest.raises(DimensionMismatch):
        solve_qp(np.eye(2), np.zeros(2), np.ones((1, 2)), np.ones(2))
