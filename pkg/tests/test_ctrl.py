import math

import numpy as np
import pytest
import scipy.linalg

from uio_lab import ctrl
from uio_lab.scenarios import builtin_scenario


def _riccati_residual(p, P):
    BRB = p.B @ np.linalg.solve(p.R, p.B.T)
    return p.A.T @ P + P @ p.A - P @ BRB @ P + p.Q


def test_scalar_integrator_closed_form():
    p = ctrl.LqrProblem(A=[[0.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]])
    P = ctrl.solve_care(p)
    assert abs(P[0, 0] - 1.0) <= 1e-10
    assert abs(ctrl.lqr_gain(p)[0, 0] - 1.0) <= 1e-10


def test_scalar_stable_closed_form():
    # -2p - p^2 + 1 = 0 with p > 0
    p = ctrl.LqrProblem(A=[[-1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]])
    P = ctrl.solve_care(p)
    assert abs(P[0, 0] - (math.sqrt(2.0) - 1.0)) <= 1e-10


def test_scalar_unstable_initialization_path():
    # 4p - p^2 + 1 = 0 with p > 0; A is not Hurwitz so the solver has to
    # stabilize before iterating
    p = ctrl.LqrProblem(A=[[2.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]])
    P = ctrl.solve_care(p)
    assert abs(P[0, 0] - (2.0 + math.sqrt(5.0))) <= 1e-10


def test_diagonal_unstable_decouples():
    p = ctrl.LqrProblem(A=np.diag([1.0, 2.0]), B=np.eye(2), Q=np.eye(2), R=np.eye(2))
    P = ctrl.solve_care(p)
    want = np.diag([1.0 + math.sqrt(2.0), 2.0 + math.sqrt(5.0)])
    assert np.max(np.abs(P - want)) <= 1e-9


def test_solution_is_symmetric_psd_and_stabilizing():
    sc = builtin_scenario("example2")
    p = sc.lqr
    P = ctrl.solve_care(p)
    assert np.array_equal(P, P.T)
    assert np.min(np.linalg.eigvalsh(P)) >= -1e-12
    K = ctrl.lqr_gain(p)
    closed = p.A - p.B @ K
    assert np.max(np.linalg.eigvals(closed).real) < 0.0


def test_fixture_gains_match_reference_solver():
    for name in ("example2", "example3"):
        p = builtin_scenario(name).lqr
        P = ctrl.solve_care(p)
        P_ref = scipy.linalg.solve_continuous_are(p.A, p.B, p.Q, p.R)
        scale = max(1.0, np.max(np.abs(P_ref)))
        assert np.max(np.abs(P - P_ref)) <= 1e-6 * scale
        res = _riccati_residual(p, P)
        assert np.max(np.abs(res)) <= 1e-8 * max(1.0, np.linalg.norm(P))


def test_double_integrator_gain_values():
    sc = builtin_scenario("example3")
    K = ctrl.lqr_gain(sc.lqr)
    want = np.array([[-1.3620, 10.4615, 2.0165, 10.0419]])
    assert np.max(np.abs(K - want)) <= 1e-3


def test_random_problems_match_reference_solver():
    rng = np.random.default_rng(47)
    solved = 0
    while solved < 12:
        n = int(rng.integers(2, 6))
        r = int(rng.integers(1, n + 1))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, r))
        Qh = rng.normal(size=(n, n))
        Q = Qh.T @ Qh
        R = np.eye(r) * float(rng.uniform(0.5, 3.0))
        try:
            p = ctrl.LqrProblem(A=A, B=B, Q=Q, R=R)
            P = ctrl.solve_care(p)
        except (ValueError, ctrl.ConvergenceError):
            continue
        P_ref = scipy.linalg.solve_continuous_are(A, B, Q, R)
        scale = max(1.0, np.max(np.abs(P_ref)))
        assert np.max(np.abs(P - P_ref)) <= 1e-6 * scale
        assert np.max(np.abs(_riccati_residual(p, P))) <= 1e-8 * max(
            1.0, np.linalg.norm(P)
        )
        solved += 1


def test_non_stabilizable_rejected():
    with pytest.raises(ValueError, match="stabiliz"):
        p = ctrl.LqrProblem(
            A=np.diag([1.0, -1.0]), B=[[0.0], [1.0]], Q=np.eye(2), R=[[1.0]]
        )
        ctrl.solve_care(p)


def test_weight_validation():
    with pytest.raises(ValueError):
        ctrl.LqrProblem(A=[[0.0]], B=[[1.0]], Q=[[-1.0]], R=[[1.0]])
    with pytest.raises(ValueError):
        ctrl.LqrProblem(A=[[0.0]], B=[[1.0]], Q=[[1.0]], R=[[0.0]])
    with pytest.raises(ValueError):
        ctrl.LqrProblem(
            A=np.zeros((2, 2)),
            B=np.eye(2),
            Q=[[1.0, 0.5], [0.0, 1.0]],
            R=np.eye(2),
        )
    with pytest.raises(ValueError):
        ctrl.LqrProblem(
            A=np.zeros((2, 2)),
            B=np.eye(2),
            Q=np.eye(2),
            R=[[1.0, 0.0], [0.5, 1.0]],
        )


def test_gain_formula_consistency():
    sc = builtin_scenario("example3")
    p = sc.lqr
    P = ctrl.solve_care(p)
    K = ctrl.lqr_gain(p)
    want = np.linalg.solve(p.R, p.B.T @ P)
    assert np.max(np.abs(K - want)) <= 1e-12 * max(1.0, np.max(np.abs(want)))
