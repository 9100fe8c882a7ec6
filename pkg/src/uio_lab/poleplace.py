"""Eigenvalue assignment for observer and state-feedback gains.

The single primitive is a Sylvester-equation parameterization of the
feedback problem: pick a real matrix L carrying the requested spectrum,
pick a seed G, solve A X - X L = B G, and read the gain off as G X^{-1}.
Output injection (the observer case) is the exact transpose dual and is
implemented that way rather than duplicated.

The method is deterministic: L is a fixed real block form of the pole
set and G is a fixed seed, so repeated calls return bit-identical gains.
"""

from __future__ import annotations

import numpy as np

from .numlin import (
    SingularEquationError,
    as_matrix,
    eigvals,
    obsv_matrix,
    rank,
    solve_sylvester,
)

__all__ = ["PlacementError", "place_poles", "place_state_feedback", "real_block_form"]

_MAX_RETRIES = 5


class PlacementError(RuntimeError):
    """The deterministic placement routine exhausted its retry budget."""


def _validate_pole_set(poles, n: int) -> np.ndarray:
    ps = np.asarray([complex(p) for p in poles], dtype=np.complex128)
    if ps.size != n:
        raise ValueError(f"expected {n} poles, got {ps.size}")
    if not np.all(np.isfinite(ps.real) & np.isfinite(ps.imag)):
        raise ValueError("pole set contains non-finite values")
    if np.any(ps.real >= 0.0):
        raise ValueError("pole set must lie strictly in the open left half plane")
    return ps


def _split_conjugate(ps: np.ndarray) -> tuple[list[float], list[complex]]:
    """Split into real poles and upper-half-plane pair representatives.

    Complex poles must come in conjugate pairs (up to a small matching
    tolerance); anything unmatched is an error since no real gain can
    produce that spectrum.
    """
    reals: list[float] = []
    upper: list[complex] = []
    lower: list[complex] = []
    for p in ps:
        tol = 1e-9 * max(1.0, abs(p))
        if abs(p.imag) <= tol:
            reals.append(float(p.real))
        elif p.imag > 0:
            upper.append(complex(p))
        else:
            lower.append(complex(p))
    if len(upper) != len(lower):
        raise ValueError("pole set is not closed under conjugation")
    lower = sorted(lower, key=lambda z: (z.real, z.imag))
    for u in sorted(upper, key=lambda z: (z.real, -z.imag)):
        tol = 1e-9 * max(1.0, abs(u))
        hit = next(
            (k for k, l in enumerate(lower) if abs(l - u.conjugate()) <= tol), None
        )
        if hit is None:
            raise ValueError(f"pole {u} has no conjugate partner in the set")
        lower.pop(hit)
    return sorted(reals), sorted(upper, key=lambda z: (z.real, z.imag))


def real_block_form(poles) -> np.ndarray:
    """Real matrix with the requested spectrum, in a fixed block layout.

    Distinct real poles become 1x1 blocks, a real pole of multiplicity k
    becomes a k x k Jordan block, a conjugate pair a +- bi becomes the
    rotation-like block [[a, b], [-b, a]], and a repeated pair chains those
    blocks with identity couplings. Every block is non-derogatory, which is
    what makes the Sylvester parameterization solvable with a single seed.
    """
    ps = np.asarray([complex(p) for p in poles], dtype=np.complex128)
    reals, pairs = _split_conjugate(ps)
    n = ps.size
    L = np.zeros((n, n))
    i = 0

    def run_lengths(values, close):
        groups: list[tuple[complex, int]] = []
        for v in values:
            if groups and close(groups[-1][0], v):
                groups[-1] = (groups[-1][0], groups[-1][1] + 1)
            else:
                groups.append((v, 1))
        return groups

    for lam, k in run_lengths(reals, lambda a, b: abs(a - b) <= 1e-9 * max(1.0, abs(a))):
        for j in range(k):
            L[i + j, i + j] = lam.real if isinstance(lam, complex) else lam
            if j:
                L[i + j - 1, i + j] = 1.0
        i += k
    for lam, k in run_lengths(pairs, lambda a, b: abs(a - b) <= 1e-9 * max(1.0, abs(a))):
        a, b = lam.real, lam.imag
        for j in range(k):
            L[i, i] = a
            L[i + 1, i + 1] = a
            L[i, i + 1] = b
            L[i + 1, i] = -b
            if j:
                L[i - 2, i] = 1.0
                L[i - 1, i + 1] = 1.0
            i += 2
    return L


def _seed(r: int, n: int) -> np.ndarray:
    G = np.empty((r, n))
    for i in range(r):
        for j in range(n):
            G[i, j] = 1.0 + i + 2.0 * j
    return G


def _spectrum_gap(achieved: np.ndarray, requested: np.ndarray) -> float:
    """Max distance under a greedy matching of the two spectra."""
    rem = list(achieved)
    worst = 0.0
    for p in requested:
        k = int(np.argmin([abs(p - a) for a in rem]))
        worst = max(worst, abs(p - rem.pop(k)))
    return worst


def place_state_feedback(A, B, poles) -> np.ndarray:
    """Gain K such that eig(A - B @ K) matches ``poles``, within 1e-6.

    Requirements: (A, B) controllable, the pole set self-conjugate with all
    real parts negative, and no requested pole may coincide with an
    eigenvalue of A (the Sylvester parameterization is singular there;
    nudge such poles by more than 1e-9 relative).
    """
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B")
    n = A.shape[0]
    if B.shape[0] != n:
        raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
    if B.shape[1] < 1:
        raise ValueError("B must have at least one column")
    ps = _validate_pole_set(poles, n)
    # controllability of (A, B) == observability of (B^T, A^T)
    if rank(obsv_matrix(A.T, B.T)) < n:
        raise ValueError("pair is not controllable (dual pair not observable); cannot assign poles")
    spec_a = eigvals(A)
    for p in ps:
        gap = np.min(np.abs(spec_a - p))
        if gap <= 1e-9 * (1.0 + abs(p)):
            raise SingularEquationError(
                f"requested pole {p} collides with an open-loop eigenvalue; "
                "shift it by more than 1e-9 relative"
            )
    L = real_block_form(ps)
    G = _seed(B.shape[1], n)
    last_exc: Exception | None = None
    for attempt in range(_MAX_RETRIES + 1):
        try:
            X = solve_sylvester(A, -L, B @ G)
            sv = np.linalg.svd(X, compute_uv=False)
            if sv[-1] <= _n_eps(n) * sv[0]:
                raise SingularEquationError("parameterization produced a singular X")
            K = np.linalg.solve(X.T, G.T).T
            gap = _spectrum_gap(eigvals(A - B @ K), ps)
            if gap > 1e-6:
                raise SingularEquationError(
                    f"achieved spectrum is off by {gap:.3e} (> 1e-6)"
                )
            return K
        except SingularEquationError as exc:
            last_exc = exc
            G = G.copy()
            G[0, 0] += 1.0  # deterministic reseed
    raise PlacementError(
        f"placement failed after {_MAX_RETRIES} seed perturbations: {last_exc}"
    )


def _n_eps(n: int) -> float:
    return n * float(np.finfo(np.float64).eps)


def place_poles(A, C, poles) -> np.ndarray:
    """Observer gain K1 such that eig(A - K1 @ C) matches ``poles``.

    This is output injection, solved through the state-feedback primitive
    on the transposed pair. (C, A) must be observable.
    """
    A = as_matrix(A, "A", square=True)
    C = as_matrix(C, "C")
    n = A.shape[0]
    if C.shape[1] != n:
        raise ValueError(f"C has {C.shape[1]} columns, expected {n}")
    if rank(obsv_matrix(A, C)) < n:
        raise ValueError("pair (C, A) is not observable; cannot assign observer poles")
    return place_state_feedback(A.T, C.T, poles).T
