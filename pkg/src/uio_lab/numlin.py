"""Dense real-matrix primitives shared by the observer machinery.

Everything operates on small dense float64 arrays (the synthesis problems
this package targets stay well under dimension 100). Functions are pure,
reject non-finite input up front, and raise plain ``ValueError`` for shape
problems so callers can surface messages unchanged.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "SingularEquationError",
    "as_matrix",
    "rank",
    "pinv",
    "eigvals",
    "obsv_matrix",
    "solve_sylvester",
    "full_rank_factorization",
]

_EPS = float(np.finfo(np.float64).eps)

# Dense Kronecker linearization is O((p*s)^3); cap it at the problem sizes
# observer synthesis actually produces.
_SYLVESTER_MAX = 400


class SingularEquationError(ValueError):
    """A matrix equation had no (unique) solution."""


def as_matrix(value, name: str = "matrix", square: bool = False) -> np.ndarray:
    """Coerce ``value`` to a finite 2-D float64 array.

    Raises ValueError when the input is not 2-D, contains NaN/Inf, or
    (with ``square=True``) is not square.
    """
    M = np.asarray(value, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {M.shape}")
    if M.size and not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    if square and M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def rank(M, tol: float = 0.0) -> int:
    """Numerical rank of ``M``.

    Counts singular values above ``tol * max(shape) * sigma_max``; passing
    ``tol=0`` selects machine epsilon as the relative cutoff. This is the
    single rank notion used everywhere in the package so that existence
    checks and factorizations cannot disagree with each other.
    """
    M = as_matrix(M, "M")
    if tol < 0.0 or not np.isfinite(tol):
        raise ValueError("tol must be a finite value >= 0")
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    rel = tol if tol > 0.0 else _EPS
    return int(np.count_nonzero(s > rel * max(M.shape) * s[0]))


def pinv(M) -> np.ndarray:
    """Moore-Penrose pseudoinverse (SVD based)."""
    return np.linalg.pinv(as_matrix(M, "M"))


def eigvals(M) -> np.ndarray:
    """Eigenvalues of a square matrix, unordered, as complex128."""
    return np.linalg.eigvals(as_matrix(M, "M", square=True)).astype(np.complex128)


def obsv_matrix(A, C) -> np.ndarray:
    """Observability matrix [C; CA; ...; CA^(n-1)], shape (n*m, n)."""
    A = as_matrix(A, "A", square=True)
    C = as_matrix(C, "C")
    n = A.shape[0]
    if C.shape[1] != n:
        raise ValueError(f"C has {C.shape[1]} columns, expected {n}")
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def solve_sylvester(A, B, C) -> np.ndarray:
    """Solve the Sylvester equation A @ X + X @ B = C for X.

    Solved by direct Kronecker linearization, which is exact up to one
    dense LU solve and keeps this module free of iterative machinery. The
    equation has a unique solution iff the spectra of A and -B are
    disjoint; spectral overlap surfaces as SingularEquationError.

    A is (p, p), B is (s, s), C is (p, s). Problems with p*s > 400 are
    rejected: the dense path is meant for synthesis-sized systems only.
    """
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B", square=True)
    C = as_matrix(C, "C")
    p, s = A.shape[0], B.shape[0]
    if C.shape != (p, s):
        raise ValueError(f"C must have shape ({p}, {s}), got {C.shape}")
    if p * s > _SYLVESTER_MAX:
        raise ValueError(
            f"problem size p*s = {p * s} exceeds the dense solver cap of {_SYLVESTER_MAX}"
        )
    # Row-major vectorization: vec(AX + XB) = (A (x) I + I (x) B^T) vec(X).
    K = np.kron(A, np.eye(s)) + np.kron(np.eye(p), B.T)
    try:
        x = np.linalg.solve(K, C.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SingularEquationError(
            "Sylvester equation is singular: spectra of A and -B overlap"
        ) from exc
    X = x.reshape(p, s)
    scale = (np.linalg.norm(A) + np.linalg.norm(B)) * np.linalg.norm(X)
    residual = np.linalg.norm(A @ X + X @ B - C)
    if not np.all(np.isfinite(X)) or residual > 1e-10 * scale + 1e-12 * np.linalg.norm(C):
        raise SingularEquationError(
            f"Sylvester solve failed the residual contract ({residual:.3e} vs "
            f"allowed {1e-10 * scale:.3e}); the equation is singular or nearly so"
        )
    return X


def full_rank_factorization(E, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Factor E (n, q) of rank r as E = E1 @ E2 with E1 (n, r) full column rank.

    A full-column-rank E is returned unchanged with E2 = I, so the common
    case costs one rank check. Rank-deficient inputs go through a pivoted
    QR: E1 keeps the pivot columns' span, E2 = R11^{-1} [R11 R12] P^T.
    E = 0 is rejected (no meaningful factor exists).
    """
    E = as_matrix(E, "E")
    n, q = E.shape
    r = rank(E, tol)
    if r == 0:
        raise ValueError("E is zero (or of numerical rank 0); nothing to factor")
    if r == q:
        return E.copy(), np.eye(q)
    Q, R, piv = scipy.linalg.qr(E, pivoting=True)
    E1 = Q[:, :r] @ R[:r, :r]
    E2p = scipy.linalg.solve_triangular(R[:r, :r], R[:r, :])
    E2 = np.empty((r, q))
    E2[:, piv] = E2p
    return E1, E2
