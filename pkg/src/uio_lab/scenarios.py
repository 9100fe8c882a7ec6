"""Built-in demonstration scenarios: plant, observer spec, signals, run setup.

Three classic small plants are bundled:

- ``example1``: third-order input-free system with a disturbance on the
  first state and two measured outputs. Observer poles are placed.
- ``example2``: quarter-car active suspension (body and wheel masses,
  suspension spring/damper, tire stiffness) with every state measured, a
  lumped disturbance entering all states, a fixed diagonal observer
  dynamic, and an LQR force controller fed by the estimate.
- ``example3``: two unit masses coupled by unit springs with a damper on
  each, driven through the right-hand spring, disturbance on the second
  mass's acceleration; all states measured, observer poles placed, LQR
  position controller fed by the estimate.

A scenario is a complete, reproducible experiment: ``run_scenario`` takes
it to a trajectory with no further choices to make.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numlin
from .ctrl import LqrProblem, lqr_gain
from .sim import SimConfig, Signal, Trajectory, simulate
from .uio import (
    LinearSystem,
    UioGains,
    compute_decoupling,
    design,
    place_full_measurement,
    verify_gains,
    _reduced_system,
)

__all__ = [
    "Scenario",
    "SCENARIO_NAMES",
    "builtin_scenario",
    "gains_for_scenario",
    "controller_gain",
    "run_scenario",
]

SCENARIO_NAMES = ("example1", "example2", "example3")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to reproduce one observer experiment.

    The observer dynamic is specified either by ``poles`` (placed on the
    decoupled dynamics) or by ``fdes`` (an explicit Hurwitz F, valid only
    with square invertible C); exactly one must be set. ``lqr`` is
    required when the config runs closed loop on the estimate.
    """

    name: str
    system: LinearSystem
    cfg: SimConfig
    u_ref: Signal
    d_sig: Signal
    poles: Optional[tuple[complex, ...]] = None
    fdes: Optional[np.ndarray] = None
    lqr: Optional[LqrProblem] = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("scenario name must be a non-empty string")
        if (self.poles is None) == (self.fdes is None):
            raise ValueError("exactly one of poles and fdes must be set")
        if self.poles is not None:
            object.__setattr__(self, "poles", tuple(complex(p) for p in self.poles))
        if self.fdes is not None:
            fdes = numlin.as_matrix(self.fdes, "fdes", square=True)
            if fdes.shape[0] != self.system.n:
                raise ValueError(
                    f"fdes must be {self.system.n} x {self.system.n}, got {fdes.shape}"
                )
            fdes = fdes.copy()
            fdes.setflags(write=False)
            object.__setattr__(self, "fdes", fdes)
        if self.cfg.control_mode == "estimate_feedback" and self.lqr is None:
            raise ValueError("estimate_feedback mode needs an lqr block to build the controller")
        if self.lqr is not None:
            if not (
                np.array_equal(self.lqr.A, self.system.A)
                and np.array_equal(self.lqr.B, self.system.B)
            ):
                raise ValueError("lqr problem must be posed on the scenario's own plant")
        if self.cfg.x0.shape != (self.system.n,):
            raise ValueError(
                f"x0 must have shape ({self.system.n},), got {self.cfg.x0.shape}"
            )


def gains_for_scenario(sc: Scenario) -> UioGains:
    """Observer gains for a scenario, via placement or the explicit-F route.

    The explicit route sets F to ``fdes`` itself (which the construction
    K1 = (A1 - Fdes) C^{-1} reaches exactly); both routes return a bundle
    that has passed strict verification.
    """
    if sc.poles is not None:
        return design(sc.system, sc.poles)
    reduced, _ = _reduced_system(sc.system)
    H, T, A1 = compute_decoupling(reduced)
    K1 = place_full_measurement(A1, sc.system.C, sc.fdes)
    F = np.array(sc.fdes, copy=True)
    K2 = F @ H
    gains = UioGains(F=F, T=T, K=K1 + K2, H=H, K1=K1, K2=K2)
    chk = verify_gains(sc.system, gains)
    if not chk.passed:
        raise RuntimeError(
            f"explicit-F construction failed verification: residuals {dict(chk.residuals)}"
        )
    return gains


def controller_gain(sc: Scenario) -> Optional[np.ndarray]:
    """LQR state-feedback gain for the scenario's controller, if it has one."""
    if sc.lqr is None:
        return None
    return lqr_gain(sc.lqr)


def run_scenario(sc: Scenario) -> Trajectory:
    """Design the observer, build the controller if any, and simulate."""
    gains = gains_for_scenario(sc)
    kctrl = None
    if sc.cfg.control_mode == "estimate_feedback":
        kctrl = controller_gain(sc)
    return simulate(sc.system, gains, sc.cfg, u_ref=sc.u_ref, d_sig=sc.d_sig, kctrl=kctrl)


def _example1() -> Scenario:
    A = [[-1.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, -1.0]]
    C = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
    E = [[-1.0], [0.0], [0.0]]
    system = LinearSystem(A=A, B=None, C=C, E=E)
    cfg = SimConfig(
        t_end=20.0,
        dt=1e-3,
        x0=[100.0, -100.0, 1.0],
        # estimate starts on the measured value of x1 (H projects y onto it)
        xhat0=[100.0, 0.0, 0.0],
        control_mode="open_loop",
    )
    return Scenario(
        name="example1",
        system=system,
        cfg=cfg,
        u_ref=Signal.zero(),
        d_sig=Signal.step(1.0, start_time=10.0),
        poles=(-2.0, -10.0, -5.0),
    )


def _example2() -> Scenario:
    mb = 300.0  # car body mass, kg
    mw = 60.0  # wheel assembly mass, kg
    bs = 1000.0  # suspension damping, N s/m
    ks = 16000.0  # suspension stiffness, N/m
    kt = 190000.0  # tire stiffness, N/m
    A = [
        [0.0, 1.0, 0.0, 0.0],
        [-ks / mb, -bs / mb, ks / mb, bs / mb],
        [0.0, 0.0, 0.0, 1.0],
        [ks / mw, bs / mw, (-ks - kt) / mw, -bs / mw],
    ]
    B = [
        [0.0, 0.0],
        [0.0, 10000.0 / mb],
        [0.0, 0.0],
        [kt / mw, -10000.0 / mw],
    ]
    C = np.eye(4)
    E = [[1.0], [1.0], [1.0], [1.0]]
    system = LinearSystem(A=A, B=B, C=C, E=E)
    lqr = LqrProblem(
        A=system.A,
        B=system.B,
        Q=np.diag([0.25, 4.0, 1.0, 4.0]),
        R=50.0 * np.eye(2),
    )
    cfg = SimConfig(
        t_end=20.0,
        dt=1e-3,
        x0=[-1.0, 10.0, 3.0, 5.0],
        # H averages the four measurements, so the estimate starts there
        xhat0=[4.25, 4.25, 4.25, 4.25],
        control_mode="estimate_feedback",
    )
    return Scenario(
        name="example2",
        system=system,
        cfg=cfg,
        u_ref=Signal.zero(),
        d_sig=Signal.step(1.0, start_time=5.0),
        fdes=-4.0 * np.eye(4),
        lqr=lqr,
    )


def _example3() -> Scenario:
    k = 1.0  # spring stiffness
    m = 1.0  # mass
    c = 1.0  # damping
    A = [
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-2.0 * k / m, k / m, -c / m, 0.0],
        [k / m, -2.0 * k / m, 0.0, -c / m],
    ]
    B = [[0.0], [0.0], [0.0], [k / m]]
    C = np.eye(4)
    E = [[0.0], [0.0], [0.0], [1.0]]
    system = LinearSystem(A=A, B=B, C=C, E=E)
    lqr = LqrProblem(A=system.A, B=system.B, Q=100.0 * np.eye(4), R=[[1.0]])
    cfg = SimConfig(
        t_end=20.0,
        dt=1e-3,
        x0=[-1.0, -5.0, 1.0, 1.0],
        # H passes through the measured x4 only
        xhat0=[0.0, 0.0, 0.0, 1.0],
        control_mode="estimate_feedback",
    )
    return Scenario(
        name="example3",
        system=system,
        cfg=cfg,
        u_ref=Signal.sine(1.0, frequency=1.0),
        d_sig=Signal.step(1.0, start_time=5.0),
        poles=(-2.0, -10.0, -5.0, -3.0),
        lqr=lqr,
    )


_BUILTINS = {"example1": _example1, "example2": _example2, "example3": _example3}


def builtin_scenario(name: str) -> Scenario:
    """One of the bundled scenarios by name; see SCENARIO_NAMES."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; available: {', '.join(SCENARIO_NAMES)}"
        ) from None
    return factory()
