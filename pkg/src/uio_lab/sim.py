"""Fixed-step simulation of plant plus observer, and disturbance recovery.

The plant and observer are integrated jointly as one affine system

    dw/dt = M w + bu * su(t) + bd * sd(t),      w = [x; z]

where su, sd are the scalar reference-input and disturbance signals (a
scalar signal drives all channels of its matrix). Folding the observer
coupling into M once up front leaves a single matrix-vector product per
RK4 stage, which is what makes the compiled kernel fast.

Classical RK4 with a uniform step is used throughout: the systems of
interest are small, smooth between signal switching instants, and the
disturbance-decoupling checks need trajectories on an exactly shared grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, numlin
from .uio import LinearSystem, UioGains, verify_gains

__all__ = [
    "Signal",
    "SimConfig",
    "Trajectory",
    "InstabilityError",
    "simulate",
    "estimate_disturbance",
    "convergence_time",
]

_KIND_CODES = {
    "zero": _kernels.SIG_ZERO,
    "constant": _kernels.SIG_CONSTANT,
    "step": _kernels.SIG_STEP,
    "sine": _kernels.SIG_SINE,
    "pulse": _kernels.SIG_PULSE,
}

# Differentiating y(t) numerically at steps beyond this loses too much
# accuracy for the disturbance estimate to mean anything.
_DT_PRECISION_LIMIT = 1e-2


class InstabilityError(RuntimeError):
    """The integrated state left the finite range.

    ``time`` is the first grid instant at which a non-finite value
    appeared (usually a diverging closed loop or a step size far too
    large for the fastest mode).
    """

    def __init__(self, time: float):
        super().__init__(f"state became non-finite at t = {time:.6g} s")
        self.time = time


@dataclass(frozen=True)
class Signal:
    """Scalar test signal.

    Kinds and their values:

    - ``zero``: 0 everywhere.
    - ``constant``: amplitude everywhere.
    - ``step``: amplitude for t >= start_time, else 0.
    - ``sine``: amplitude * sin(frequency * (t - start_time) + phase) for
      t >= start_time, else 0. ``frequency`` is angular (rad/s).
    - ``pulse``: amplitude for start_time <= t < start_time + width, else 0.
    """

    kind: str
    amplitude: float = 0.0
    start_time: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    width: float = 0.0

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(
                f"unknown signal kind {self.kind!r}; expected one of {sorted(_KIND_CODES)}"
            )
        for name in ("amplitude", "start_time", "frequency", "phase", "width"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"signal {name} must be a finite number, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.start_time < 0.0:
            raise ValueError("start_time must be >= 0")
        if self.kind == "sine" and self.frequency <= 0.0:
            raise ValueError("sine frequency must be > 0 (angular, rad/s)")
        if self.kind == "pulse" and self.width <= 0.0:
            raise ValueError("pulse width must be > 0")

    @classmethod
    def zero(cls) -> "Signal":
        return cls(kind="zero")

    @classmethod
    def constant(cls, amplitude: float) -> "Signal":
        return cls(kind="constant", amplitude=amplitude)

    @classmethod
    def step(cls, amplitude: float, start_time: float = 0.0) -> "Signal":
        return cls(kind="step", amplitude=amplitude, start_time=start_time)

    @classmethod
    def sine(
        cls,
        amplitude: float,
        frequency: float,
        phase: float = 0.0,
        start_time: float = 0.0,
    ) -> "Signal":
        return cls(
            kind="sine",
            amplitude=amplitude,
            frequency=frequency,
            phase=phase,
            start_time=start_time,
        )

    @classmethod
    def pulse(cls, amplitude: float, start_time: float, width: float) -> "Signal":
        return cls(kind="pulse", amplitude=amplitude, start_time=start_time, width=width)

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def params(self) -> np.ndarray:
        return np.array(
            [self.amplitude, self.start_time, self.frequency, self.phase, self.width]
        )

    def value(self, t: float) -> float:
        return float(_kernels.signal_value(self.code, self.params, float(t)))

    def series(self, times: np.ndarray) -> np.ndarray:
        times = np.ascontiguousarray(times, dtype=np.float64)
        return _kernels.signal_series(self.code, self.params, times)


def _lock_vector(v, name: str) -> np.ndarray:
    arr = np.array(v, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Time grid, initial conditions and control mode for one run.

    Exactly one of ``z0`` (observer internal state) and ``xhat0`` (initial
    state estimate) must be given; they are related by z = xhat - H y, and
    the resolution happens inside ``simulate`` where H is known. dt is
    capped at 1e-2 s: beyond that RK4 on the systems this package targets
    is not trustworthy, and neither is the differentiation step used for
    disturbance recovery.

    ``control_mode`` is "open_loop" (u is the reference signal alone) or
    "estimate_feedback" (u = reference - Kc @ xhat).
    """

    t_end: float
    dt: float
    x0: np.ndarray
    z0: Optional[np.ndarray] = None
    xhat0: Optional[np.ndarray] = None
    control_mode: str = "open_loop"

    def __post_init__(self):
        if not (isinstance(self.t_end, (int, float)) and math.isfinite(self.t_end) and self.t_end > 0):
            raise ValueError(f"t_end must be a finite value > 0, got {self.t_end!r}")
        if not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be a finite value > 0, got {self.dt!r}")
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "dt", float(self.dt))
        if self.dt > _DT_PRECISION_LIMIT:
            raise ValueError(f"dt = {self.dt:g} exceeds the 1e-2 s cap")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        if self.control_mode not in ("open_loop", "estimate_feedback"):
            raise ValueError(
                f"control_mode must be 'open_loop' or 'estimate_feedback', got {self.control_mode!r}"
            )
        object.__setattr__(self, "x0", _lock_vector(self.x0, "x0"))
        if (self.z0 is None) == (self.xhat0 is None):
            raise ValueError("exactly one of z0 and xhat0 must be provided")
        if self.z0 is not None:
            object.__setattr__(self, "z0", _lock_vector(self.z0, "z0"))
        if self.xhat0 is not None:
            object.__setattr__(self, "xhat0", _lock_vector(self.xhat0, "xhat0"))

    @property
    def nsteps(self) -> int:
        """Number of RK4 steps so that the grid covers [0, t_end].

        t_end/dt is snapped to the nearest integer when it is within 1e-9
        relative (20/0.001 is not an integer in floating point); otherwise
        the grid is truncated at the last full step before t_end.
        """
        ratio = self.t_end / self.dt
        k = round(ratio)
        if abs(ratio - k) <= 1e-9 * max(ratio, 1.0):
            return int(k)
        return int(math.floor(ratio))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled run: plant state, estimate, measurements, signals.

    ``e`` is not stored independently: it is defined as x - xhat row by
    row at construction, so it can never disagree with the states. All
    arrays share the same first dimension (len(times)) and are read-only.
    """

    times: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    y: np.ndarray
    u: np.ndarray
    d: np.ndarray
    dhat: np.ndarray
    e: np.ndarray = field(init=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64, copy=True)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("times must be 1-D with at least two samples")
        N = times.size
        for name in ("x", "xhat", "y", "u", "d", "dhat"):
            M = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if M.ndim != 2 or M.shape[0] != N:
                raise ValueError(f"{name} must be 2-D with {N} rows, got {M.shape}")
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        if self.x.shape != self.xhat.shape:
            raise ValueError("x and xhat must have identical shapes")
        if self.d.shape != self.dhat.shape:
            raise ValueError("d and dhat must have identical shapes")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        e = self.x - self.xhat
        e.setflags(write=False)
        object.__setattr__(self, "e", e)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def _joint_matrices(
    sys: LinearSystem, gains: UioGains, kctrl: Optional[np.ndarray]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fold plant, observer and (optional) feedback into one affine system.

    With u = su * 1 - Kc xhat and xhat = z + H C x the joint state
    w = [x; z] obeys dw/dt = M w + bu su + bd sd with

        M = [[A - B Kc H C,        -B Kc      ],
             [K C - T B Kc H C,    F - T B Kc ]]

    (Kc = 0 reproduces the open loop). bu = [B; TB] summed over input
    channels, bd = [E; 0] summed over disturbance channels: the error
    dynamics never see either term.
    """
    n, m = sys.n, sys.m
    A, B, C, E = sys.A, sys.B, sys.C, sys.E
    F, T, K, H = gains.F, gains.T, gains.K, gains.H
    Kc = np.zeros((sys.r, n)) if kctrl is None else kctrl
    TB = T @ B
    KcHC = Kc @ H @ C
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A - B @ KcHC
    M[:n, n:] = -B @ Kc
    M[n:, :n] = K @ C - TB @ KcHC
    M[n:, n:] = F - TB @ Kc
    ones_r = np.ones(sys.r)
    ones_q = np.ones(sys.q)
    bu = np.concatenate([B @ ones_r, TB @ ones_r])
    bd = np.concatenate([E @ ones_q, np.zeros(n)])
    return np.ascontiguousarray(M), np.ascontiguousarray(bu), np.ascontiguousarray(bd)


def simulate(
    sys: LinearSystem,
    gains: UioGains,
    cfg: SimConfig,
    u_ref: Optional[Signal] = None,
    d_sig: Optional[Signal] = None,
    kctrl: Optional[np.ndarray] = None,
) -> Trajectory:
    """Integrate plant and observer together and return the sampled run.

    The gain bundle is verified against the plant (tolerance 1e-8) before
    anything is integrated; simulating with broken gains would silently
    produce coupled errors. ``kctrl`` is required exactly when
    cfg.control_mode is "estimate_feedback" and must be absent otherwise.
    Unset signals default to zero. The returned trajectory includes the
    reconstructed disturbance ``dhat`` (see ``estimate_disturbance``).

    Raises InstabilityError when the joint state diverges to non-finite
    values before t_end.
    """
    u_ref = Signal.zero() if u_ref is None else u_ref
    d_sig = Signal.zero() if d_sig is None else d_sig
    chk = verify_gains(sys, gains)
    if not chk.passed:
        worst = max(chk.residuals, key=lambda k: chk.residuals[k])
        raise ValueError(
            "gains fail verification against this plant "
            f"(worst constraint {worst!r}: {chk.residuals[worst]:.3e}, "
            f"spectral abscissa {chk.spectral_abscissa:.3e}); "
            "refusing to simulate with a broken observer"
        )
    if cfg.control_mode == "estimate_feedback":
        if kctrl is None:
            raise ValueError("control_mode 'estimate_feedback' requires kctrl")
        kctrl = numlin.as_matrix(kctrl, "kctrl")
        if kctrl.shape != (sys.r, sys.n):
            raise ValueError(f"kctrl must have shape ({sys.r}, {sys.n}), got {kctrl.shape}")
        if sys.r == 0:
            raise ValueError("plant has no inputs; estimate feedback is impossible")
    elif kctrl is not None:
        raise ValueError("kctrl given but control_mode is 'open_loop'")
    if cfg.x0.shape != (sys.n,):
        raise ValueError(f"x0 must have shape ({sys.n},), got {cfg.x0.shape}")

    y0 = sys.C @ cfg.x0
    if cfg.z0 is not None:
        z0 = cfg.z0
    else:
        z0 = cfg.xhat0 - gains.H @ y0
    if z0.shape != (sys.n,):
        raise ValueError(f"z0/xhat0 must have shape ({sys.n},), got {z0.shape}")

    M, bu, bd = _joint_matrices(sys, gains, kctrl)
    w0 = np.ascontiguousarray(np.concatenate([cfg.x0, z0]))
    nsteps = cfg.nsteps
    # divergence is detected inside the kernel; silence the overflow noise
    # the fallback path emits on the way there
    with np.errstate(over="ignore", invalid="ignore"):
        W, bad = _kernels.rk4_affine(
            M,
            bu,
            bd,
            u_ref.code,
            u_ref.params,
            d_sig.code,
            d_sig.params,
            w0,
            cfg.dt,
            nsteps,
        )
    if bad >= 0:
        raise InstabilityError(time=bad * cfg.dt)

    times = np.arange(nsteps + 1) * cfg.dt
    n = sys.n
    x = W[:, :n]
    y = x @ sys.C.T
    xhat = W[:, n:] + y @ gains.H.T
    su = u_ref.series(times)
    d = np.outer(d_sig.series(times), np.ones(sys.q))
    u = np.outer(su, np.ones(sys.r))
    if kctrl is not None:
        u = u - xhat @ kctrl.T
    # recover z as xhat - H y (not the raw kernel state) so that the stored
    # dhat matches a later estimate_disturbance() call bit for bit
    dhat = _dhat_series(times, y, xhat, xhat - y @ gains.H.T, u, sys, gains)
    return Trajectory(times=times, x=x, xhat=xhat, y=y, u=u, d=d, dhat=dhat)


def _dhat_series(times, y, xhat, z, u, sys: LinearSystem, gains: UioGains) -> np.ndarray:
    """Disturbance reconstruction from observer quantities.

    Inverts the measurement dynamics: C E d = yhat' - C A xhat - C B u,
    with yhat' = C z' + C H y' where z' comes from the observer equation
    (exact) and y' from finite differences (second-order central, matching
    one-sided stencils at the ends).
    """
    dt = float(times[1] - times[0])
    zdot = z @ gains.F.T + y @ gains.K.T
    if sys.r:
        zdot = zdot + u @ (gains.T @ sys.B).T
    if len(times) >= 3:
        ydot = np.gradient(y, dt, axis=0, edge_order=2)
    else:
        ydot = np.gradient(y, dt, axis=0)
    yhat_dot = zdot @ sys.C.T + ydot @ (sys.C @ gains.H).T
    rhs = yhat_dot - xhat @ (sys.C @ sys.A).T
    if sys.r:
        rhs = rhs - u @ (sys.C @ sys.B).T
    return rhs @ numlin.pinv(sys.C @ sys.E).T


def estimate_disturbance(
    traj: Trajectory, sys: LinearSystem, gains: UioGains, strict: bool = False
) -> np.ndarray:
    """Reconstruct the unknown input from a finished trajectory.

    Returns an array of shape (len(times), q). This recomputes exactly
    what ``simulate`` stored in ``traj.dhat``; call it directly when the
    trajectory was produced elsewhere or loaded from disk. The estimate
    rests on differentiating y(t), so its error grows with dt; with
    ``strict=True`` a grid coarser than 1e-2 s is rejected instead of
    silently degrading.
    """
    dt = traj.dt
    if strict and dt > _DT_PRECISION_LIMIT:
        raise ValueError(
            f"dt = {dt:g} is too coarse for disturbance reconstruction (cap 1e-2 s)"
        )
    if traj.x.shape[1] != sys.n or traj.y.shape[1] != sys.m:
        raise ValueError("trajectory dimensions do not match the plant")
    z = traj.xhat - traj.y @ gains.H.T
    return _dhat_series(traj.times, traj.y, traj.xhat, z, traj.u, sys, gains)


def convergence_time(traj: Trajectory, fraction: float) -> float:
    """First grid time from which ||e(t)|| stays at or below fraction * ||e(0)||.

    Returns math.inf when the error never settles below the threshold by
    the end of the run. Undefined (ValueError) when e(0) = 0, since the
    threshold would be zero.
    """
    if not (isinstance(fraction, (int, float)) and 0.0 < fraction < 1.0):
        raise ValueError(f"fraction must lie strictly between 0 and 1, got {fraction!r}")
    norms = np.linalg.norm(traj.e, axis=1)
    if norms[0] == 0.0:
        raise ValueError("e(0) = 0; convergence time is undefined")
    ok = norms <= fraction * norms[0]
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(traj.times[0])
    if bad[-1] == norms.size - 1:
        return math.inf
    return float(traj.times[bad[-1] + 1])
