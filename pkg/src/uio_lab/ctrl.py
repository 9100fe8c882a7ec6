"""Infinite-horizon LQR state feedback for the reference controllers.

The Riccati equation A'P + PA - PBR^{-1}B'P + Q = 0 is solved by the
Kleinman iteration: starting from any stabilizing gain, each step solves
one Lyapunov equation (a linear problem, handled by the Sylvester solver)
and updates the gain. Convergence is quadratic and monotone, and the
result is checked against an explicit residual bound before it is
returned, so a converged answer is a verified answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numlin, poleplace

__all__ = ["LqrProblem", "ConvergenceError", "solve_care", "lqr_gain"]

_MAX_ITER = 100
_REL_STEP_TOL = 1e-12
_RESIDUAL_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """The Riccati iteration failed to converge or to meet its residual bound."""


def _check_symmetric(M: np.ndarray, name: str) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 0.0)
    if not np.allclose(M, M.T, atol=1e-9 * scale, rtol=0.0):
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class LqrProblem:
    """Data for minimizing the integral of x'Qx + u'Ru subject to dx/dt = Ax + Bu.

    Q must be symmetric positive semidefinite, R symmetric positive
    definite. Stabilizability of (A, B) is checked at solve time.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = numlin.as_matrix(self.A, "A", square=True)
        n = A.shape[0]
        B = numlin.as_matrix(self.B, "B")
        if B.shape[0] != n or B.shape[1] < 1:
            raise ValueError(f"B must be ({n}, r) with r >= 1, got {B.shape}")
        Q = _check_symmetric(numlin.as_matrix(self.Q, "Q", square=True), "Q")
        R = _check_symmetric(numlin.as_matrix(self.R, "R", square=True), "R")
        if Q.shape[0] != n:
            raise ValueError(f"Q must be ({n}, {n}), got {Q.shape}")
        if R.shape[0] != B.shape[1]:
            raise ValueError(f"R must be ({B.shape[1]}, {B.shape[1]}), got {R.shape}")
        q_eigs = np.linalg.eigvalsh(Q)
        if q_eigs.size and q_eigs[0] < -1e-10 * max(1.0, q_eigs[-1]):
            raise ValueError("Q must be positive semidefinite")
        r_eigs = np.linalg.eigvalsh(R)
        if r_eigs[0] <= 0.0:
            raise ValueError("R must be positive definite")
        for name, M in (("A", A), ("B", B), ("Q", Q), ("R", R)):
            M = np.array(M, copy=True)
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _assert_stabilizable(A: np.ndarray, B: np.ndarray) -> None:
    # PBH: every eigenvalue with Re >= 0 must keep [lam*I - A, B] at full rank
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < 0.0:
            continue
        M = np.hstack([lam * np.eye(n) - A, B.astype(np.complex128)])
        if np.linalg.matrix_rank(M) < n:
            raise ValueError(
                f"(A, B) is not stabilizable: uncontrollable unstable mode at {lam:.6g}"
            )


def _initial_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A stabilizing gain to start the iteration from.

    K = 0 works whenever A is already Hurwitz. Otherwise poles are placed
    at {-1, ..., -n}; if that set collides with the open-loop spectrum the
    whole set is shifted left by 0.5 and retried a few times.
    """
    n, r = A.shape[0], B.shape[1]
    spec = np.linalg.eigvals(A)
    if np.max(spec.real) < 0.0:
        return np.zeros((r, n))
    for shift in range(8):
        target = [-(k + 1.0) - 0.5 * shift for k in range(n)]
        try:
            return poleplace.place_state_feedback(A, B, target)
        except numlin.SingularEquationError:
            continue
    raise ConvergenceError("could not construct an initial stabilizing gain")


def solve_care(problem: LqrProblem) -> np.ndarray:
    """Stabilizing solution P of the continuous-time algebraic Riccati equation.

    Raises ValueError when (A, B) is not stabilizable, ConvergenceError
    when the iteration stalls or the final residual check

        ||A'P + PA - P B R^{-1} B'P + Q||_F <= 1e-8 ||P||_F

    fails. The returned P is exactly symmetric and positive semidefinite,
    and A - B R^{-1} B'P is Hurwitz.
    """
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R
    _assert_stabilizable(A, B)
    K = _initial_gain(A, B)
    P = None
    for _ in range(_MAX_ITER):
        Acl = A - B @ K
        rhs = -(Q + K.T @ R @ K)
        try:
            Pn = numlin.solve_sylvester(Acl.T, Acl, rhs)
        except numlin.SingularEquationError as exc:
            raise ConvergenceError(f"Lyapunov step became singular: {exc}") from exc
        Pn = 0.5 * (Pn + Pn.T)
        if P is not None:
            step = np.linalg.norm(Pn - P)
            if step <= _REL_STEP_TOL * np.linalg.norm(Pn) or step == 0.0:
                P = Pn
                break
        P = Pn
        K = np.linalg.solve(R, B.T @ P)
    else:
        raise ConvergenceError(f"no convergence within {_MAX_ITER} iterations")

    Rinv_BtP = np.linalg.solve(R, B.T @ P)
    residual = np.linalg.norm(A.T @ P + P @ A - P @ B @ Rinv_BtP + Q)
    bound = _RESIDUAL_TOL * max(np.linalg.norm(P), np.linalg.norm(Q), 1e-300)
    if residual > bound:
        raise ConvergenceError(
            f"Riccati residual {residual:.3e} exceeds bound {bound:.3e}"
        )
    eigs = np.linalg.eigvalsh(P)
    if eigs.size and eigs[0] < -1e-8 * max(1.0, eigs[-1]):
        raise ConvergenceError("computed P is not positive semidefinite")
    if np.max(np.linalg.eigvals(A - B @ Rinv_BtP).real) >= 0.0:
        raise ConvergenceError("computed P does not stabilize the closed loop")
    return P


def lqr_gain(problem: LqrProblem) -> np.ndarray:
    """Optimal feedback K = R^{-1} B'P for u = -K x."""
    P = solve_care(problem)
    return np.linalg.solve(problem.R, problem.B.T @ P)
