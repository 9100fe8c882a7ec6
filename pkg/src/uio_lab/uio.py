"""Synthesis of disturbance-decoupled state observers.

For a plant

    dx/dt = A x + B u + E d,    y = C x

with d an arbitrary unknown input, the observer

    dz/dt = F z + T B u + K y,    xhat = z + H y

has estimation error obeying de/dt = F e, independent of d, provided the
gains satisfy

    (H C - I) E = 0,   T = I - H C,   F = T A - K1 C,   K = K1 + F H.

Such an observer exists iff rank(C E) = rank(E) and the pair (C, T A) is
detectable. This module checks those conditions, constructs the gains
(placing observer poles on the observable part), and verifies candidate
gains against the constraints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import numlin, poleplace

__all__ = [
    "LinearSystem",
    "UioGains",
    "GainsCheck",
    "ObservableDecomposition",
    "ExistenceReport",
    "NoUioError",
    "compute_decoupling",
    "observable_decomposition",
    "detectability",
    "check_existence",
    "design",
    "place_full_measurement",
    "verify_gains",
]

log = logging.getLogger(__name__)


class NoUioError(ValueError):
    """No disturbance-decoupled observer exists for the given plant.

    Carries ``rank_ce`` and ``rank_e`` so callers can report which half of
    the existence condition failed (a rank defect of C E, or detectability).
    """

    def __init__(self, message: str, rank_ce: int, rank_e: int):
        super().__init__(message)
        self.rank_ce = rank_ce
        self.rank_e = rank_e


def _frozen(M: np.ndarray) -> np.ndarray:
    out = np.array(M, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Plant dx/dt = A x + B u + E d, y = C x.

    B may be passed as None for an input-free plant; it is stored as an
    (n, 0) array so downstream code never branches on its presence. E must
    be nonzero: a plant without a disturbance channel needs no unknown
    input treatment. Arrays are copied and locked read-only.
    """

    A: np.ndarray
    B: np.ndarray | None
    C: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        A = numlin.as_matrix(self.A, "A", square=True)
        n = A.shape[0]
        if n < 1:
            raise ValueError("A must be at least 1 x 1")
        B = np.zeros((n, 0)) if self.B is None else numlin.as_matrix(self.B, "B")
        C = numlin.as_matrix(self.C, "C")
        E = numlin.as_matrix(self.E, "E")
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape != (C.shape[0], n) or C.shape[0] < 1:
            raise ValueError(f"C must be (m, {n}) with m >= 1, got {C.shape}")
        if E.shape != (n, E.shape[1]) or E.shape[1] < 1:
            raise ValueError(f"E must be ({n}, q) with q >= 1, got {E.shape}")
        if not np.any(E):
            raise ValueError("E is identically zero; there is no disturbance channel")
        for name, M in (("A", A), ("B", B), ("C", C), ("E", E)):
            object.__setattr__(self, name, _frozen(M))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def r(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.E.shape[1]


@dataclass(frozen=True, eq=False)
class UioGains:
    """Observer gain bundle (F, T, K, H) plus the split K = K1 + K2.

    Construction only validates shapes and finiteness; whether the gains
    actually satisfy the decoupling constraints for a given plant is the
    job of ``verify_gains``, which works on any candidate bundle, not just
    ones produced by ``design``.
    """

    F: np.ndarray
    T: np.ndarray
    K: np.ndarray
    H: np.ndarray
    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        F = numlin.as_matrix(self.F, "F", square=True)
        n = F.shape[0]
        T = numlin.as_matrix(self.T, "T", square=True)
        H = numlin.as_matrix(self.H, "H")
        K = numlin.as_matrix(self.K, "K")
        K1 = numlin.as_matrix(self.K1, "K1")
        K2 = numlin.as_matrix(self.K2, "K2")
        if T.shape[0] != n:
            raise ValueError("T must match F in size")
        m = H.shape[1]
        for name, M in (("H", H), ("K", K), ("K1", K1), ("K2", K2)):
            if M.shape != (n, m):
                raise ValueError(f"{name} must have shape ({n}, {m}), got {M.shape}")
        for name, M in (("F", F), ("T", T), ("K", K), ("H", H), ("K1", K1), ("K2", K2)):
            object.__setattr__(self, name, _frozen(M))

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True, eq=False)
class ObservableDecomposition:
    """Orthogonal change of basis splitting a pair into observable part and rest.

    In the new coordinates w = P x the pair (C, A) becomes

        P A P^T = [[A11, 0], [A12, A22]],    C P^T = [Cstar, 0]

    with (Cstar, A11) observable of dimension ``n1``. P is orthogonal, so
    the inverse transform is P.T. For an already observable pair P = I.
    """

    P: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A22: np.ndarray
    Cstar: np.ndarray
    n1: int

    def __post_init__(self):
        for name in ("P", "A11", "A12", "A22", "Cstar"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class ExistenceReport:
    """Outcome of the two-part observer existence test.

    ``detectable`` is reported as True (vacuously) when the rank condition
    already failed, since the detectability test is then never reached;
    ``uio_exists`` is the authoritative verdict. Unstable unobservable
    modes (Re >= 0) are listed when detectability fails.
    """

    rank_ce: int
    rank_e: int
    rank_condition_ok: bool
    detectable: bool
    unstable_unobservable_modes: tuple[complex, ...]
    uio_exists: bool


@dataclass(frozen=True, eq=False)
class GainsCheck:
    """Constraint residuals (max absolute entry) for a candidate gain bundle."""

    residuals: Mapping[str, float]
    spectral_abscissa: float
    tol: float
    passed: bool

    def __post_init__(self):
        object.__setattr__(self, "residuals", MappingProxyType(dict(self.residuals)))


def _max_abs(M: np.ndarray) -> float:
    return float(np.max(np.abs(M))) if M.size else 0.0


def compute_decoupling(sys: LinearSystem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decoupling triple (H, T, A1) for a plant with full-column-rank E.

    H = E ((CE)^T CE)^{-1} (CE)^T annihilates the disturbance through
    (H C - I) E = 0; T = I - H C and A1 = T A. Raises NoUioError when
    rank(C E) != rank(E) (no H can exist) and ValueError when E itself is
    rank deficient (factor it first; ``design`` does this automatically).
    """
    rank_e = numlin.rank(sys.E)
    CE = sys.C @ sys.E
    rank_ce = numlin.rank(CE)
    if rank_e < sys.q:
        raise ValueError(
            f"E has rank {rank_e} < {sys.q} columns; reduce it with "
            "full_rank_factorization before computing the decoupling"
        )
    if rank_ce != rank_e:
        raise NoUioError(
            f"rank(C E) = {rank_ce} != rank(E) = {rank_e}; "
            "the disturbance cannot be decoupled from the estimate",
            rank_ce=rank_ce,
            rank_e=rank_e,
        )
    H = sys.E @ np.linalg.inv(CE.T @ CE) @ CE.T
    T = np.eye(sys.n) - H @ sys.C
    A1 = T @ sys.A
    return H, T, A1


def observable_decomposition(A, C) -> ObservableDecomposition:
    """Split (C, A) along the observability of the pair.

    The basis comes from an SVD of the observability matrix: its row space
    (the observable subspace of dimension n1) spans the leading block, its
    kernel the trailing one. When n1 = n the identity transform is
    returned and the blocks are the originals.
    """
    A = numlin.as_matrix(A, "A", square=True)
    C = numlin.as_matrix(C, "C")
    n = A.shape[0]
    obs = numlin.obsv_matrix(A, C)
    n1 = numlin.rank(obs)
    if n1 == n:
        return ObservableDecomposition(
            P=np.eye(n),
            A11=A,
            A12=np.zeros((0, n)),
            A22=np.zeros((0, 0)),
            Cstar=C,
            n1=n,
        )
    _, _, Vt = np.linalg.svd(obs)
    P = Vt
    Ab = P @ A @ P.T
    Cb = C @ P.T
    return ObservableDecomposition(
        P=P,
        A11=Ab[:n1, :n1],
        A12=Ab[n1:, :n1],
        A22=Ab[n1:, n1:],
        Cstar=Cb[:, :n1],
        n1=n1,
    )


def detectability(A, C) -> tuple[bool, tuple[complex, ...]]:
    """Is (C, A) detectable? Returns the verdict and any offending modes.

    Detectable means every unobservable mode decays: all eigenvalues of
    the unobservable block must satisfy Re < 0 strictly, so marginally
    stable hidden modes are rejected. Offenders are sorted by real part
    (descending) for stable reporting.
    """
    dec = observable_decomposition(A, C)
    if dec.n1 == dec.P.shape[0]:
        return True, ()
    modes = numlin.eigvals(dec.A22)
    bad = sorted(
        (complex(z) for z in modes if z.real >= 0.0),
        key=lambda z: (-z.real, z.imag),
    )
    return len(bad) == 0, tuple(bad)


def _reduced_system(sys: LinearSystem) -> tuple[LinearSystem, np.ndarray | None]:
    """Replace a rank-deficient E by its full-column-rank factor E1.

    The lumped disturbance d1 = E2 d drives the same subspace, so designs
    against the reduced plant decouple the original one. Returns the
    (possibly unchanged) system and E2 (None when no reduction happened).
    """
    rank_e = numlin.rank(sys.E)
    if rank_e == sys.q:
        return sys, None
    E1, E2 = numlin.full_rank_factorization(sys.E)
    log.info(
        "E is rank deficient (rank %d < %d columns); designing against its "
        "full-column-rank factor E1",
        rank_e,
        sys.q,
    )
    return LinearSystem(A=sys.A, B=sys.B, C=sys.C, E=E1), E2


def check_existence(sys: LinearSystem) -> ExistenceReport:
    """Run the two-part existence test without constructing any gains.

    Part one: rank(C E) = rank(E). Part two: (C, T A) detectable, checked
    on the full-column-rank reduction of E so a redundant disturbance
    matrix does not mask an answer.
    """
    rank_e = numlin.rank(sys.E)
    rank_ce = numlin.rank(sys.C @ sys.E)
    if rank_ce != rank_e:
        return ExistenceReport(
            rank_ce=rank_ce,
            rank_e=rank_e,
            rank_condition_ok=False,
            detectable=True,
            unstable_unobservable_modes=(),
            uio_exists=False,
        )
    reduced, _ = _reduced_system(sys)
    _, _, A1 = compute_decoupling(reduced)
    ok, offenders = detectability(A1, sys.C)
    return ExistenceReport(
        rank_ce=rank_ce,
        rank_e=rank_e,
        rank_condition_ok=True,
        detectable=ok,
        unstable_unobservable_modes=offenders,
        uio_exists=ok,
    )


def design(sys: LinearSystem, poles) -> UioGains:
    """Construct verified observer gains with the requested error poles.

    When (C, A1) is observable the full error spectrum is assigned and
    ``poles`` must have n entries. When it is only detectable, poles are
    assigned on the observable block alone (n1 entries); the unobservable
    modes keep their own stable dynamics and cannot be moved. The pole set
    must be self-conjugate with Re < 0 throughout.

    The returned bundle has already passed ``verify_gains`` at the strict
    tolerance; failure of that internal check raises RuntimeError.
    """
    report = check_existence(sys)
    if not report.uio_exists:
        if not report.rank_condition_ok:
            raise NoUioError(
                f"rank(C E) = {report.rank_ce} != rank(E) = {report.rank_e}; "
                "no disturbance-decoupled observer exists",
                rank_ce=report.rank_ce,
                rank_e=report.rank_e,
            )
        raise NoUioError(
            "pair (C, T A) is not detectable; unstable hidden modes: "
            + ", ".join(f"{z:.6g}" for z in report.unstable_unobservable_modes),
            rank_ce=report.rank_ce,
            rank_e=report.rank_e,
        )
    reduced, _ = _reduced_system(sys)
    H, T, A1 = compute_decoupling(reduced)
    dec = observable_decomposition(A1, sys.C)
    poles = tuple(poles)
    if dec.n1 == sys.n:
        if len(poles) != sys.n:
            raise ValueError(f"(C, A1) is observable: expected {sys.n} poles, got {len(poles)}")
        K1 = poleplace.place_poles(A1, sys.C, poles)
    else:
        if len(poles) != dec.n1:
            raise ValueError(
                f"(C, A1) is detectable with observable dimension {dec.n1}: "
                f"expected {dec.n1} poles, got {len(poles)}"
            )
        K1_obs = poleplace.place_poles(dec.A11, dec.Cstar, poles)
        # unobservable rows get zero injection; those modes keep eig(A22)
        K1 = dec.P.T @ np.vstack([K1_obs, np.zeros((sys.n - dec.n1, sys.m))])
    F = A1 - K1 @ sys.C
    K2 = F @ H
    K = K1 + K2
    gains = UioGains(F=F, T=T, K=K, H=H, K1=K1, K2=K2)
    chk = verify_gains(sys, gains)
    if not chk.passed:
        raise RuntimeError(
            f"internal design check failed: residuals {dict(chk.residuals)}, "
            f"spectral abscissa {chk.spectral_abscissa:.3e}"
        )
    return gains


def place_full_measurement(A1, C, Fdes) -> np.ndarray:
    """K1 = (A1 - Fdes) C^{-1} for the full-measurement case (C square invertible).

    With every state measured, any stable Fdes is reachable exactly and
    F = A1 - K1 C = Fdes by construction. Fdes must be Hurwitz.
    """
    A1 = numlin.as_matrix(A1, "A1", square=True)
    C = numlin.as_matrix(C, "C", square=True)
    Fdes = numlin.as_matrix(Fdes, "Fdes", square=True)
    n = A1.shape[0]
    if C.shape[0] != n or Fdes.shape[0] != n:
        raise ValueError("A1, C and Fdes must all be n x n")
    if numlin.rank(C) < n:
        raise ValueError("C is singular; the full-measurement shortcut needs an invertible C")
    alpha = float(np.max(numlin.eigvals(Fdes).real))
    if alpha >= 0.0:
        raise ValueError(f"Fdes is not Hurwitz (spectral abscissa {alpha:.6g})")
    # K1 C = A1 - Fdes, solved as C^T K1^T = (A1 - Fdes)^T
    return np.linalg.solve(C.T, (A1 - Fdes).T).T


def verify_gains(sys: LinearSystem, gains: UioGains, tol: float = 1e-8) -> GainsCheck:
    """Check a candidate gain bundle against the decoupling constraints.

    Residuals (max absolute entry) are reported for each defining
    equation: (H C - I) E = 0, T = I - H C, F = T A - K1 C, K2 = F H and
    K = K1 + K2. The bundle passes iff every residual is <= tol and F is
    Hurwitz. Works on hand-built or externally obtained gains; rounded
    published gains typically need tol around 1e-1.
    """
    if gains.n != sys.n or gains.m != sys.m:
        raise ValueError(
            f"gain dimensions ({gains.n}, {gains.m}) do not match plant ({sys.n}, {sys.m})"
        )
    if not (np.isfinite(tol) and tol > 0.0):
        raise ValueError("tol must be a finite value > 0")
    H, T, F, K1, K2, K = gains.H, gains.T, gains.F, gains.K1, gains.K2, gains.K
    residuals = {
        "decoupling": _max_abs((H @ sys.C - np.eye(sys.n)) @ sys.E),
        "t_identity": _max_abs(T - (np.eye(sys.n) - H @ sys.C)),
        "f_identity": _max_abs(F - (T @ sys.A - K1 @ sys.C)),
        "k2_identity": _max_abs(K2 - F @ H),
        "k_sum": _max_abs(K - (K1 + K2)),
    }
    alpha = float(np.max(numlin.eigvals(F).real))
    passed = alpha < 0.0 and all(v <= tol for v in residuals.values())
    return GainsCheck(residuals=residuals, spectral_abscissa=alpha, tol=tol, passed=passed)
