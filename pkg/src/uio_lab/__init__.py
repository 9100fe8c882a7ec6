"""Disturbance-decoupled state observers for linear systems.

Design observers whose estimation error is immune to unknown additive
disturbances, verify the existence conditions, simulate plant and
observer together, and reconstruct the disturbance from the estimate.
"""

__version__ = "0.1.0"

from .ctrl import ConvergenceError, LqrProblem, lqr_gain, solve_care
from .numlin import SingularEquationError
from .poleplace import PlacementError, place_poles, place_state_feedback
from .scenarios import (
    SCENARIO_NAMES,
    Scenario,
    builtin_scenario,
    controller_gain,
    gains_for_scenario,
    run_scenario,
)
from .sim import (
    InstabilityError,
    Signal,
    SimConfig,
    Trajectory,
    convergence_time,
    estimate_disturbance,
    simulate,
)
from .uio import (
    ExistenceReport,
    GainsCheck,
    LinearSystem,
    NoUioError,
    ObservableDecomposition,
    UioGains,
    check_existence,
    compute_decoupling,
    design,
    detectability,
    observable_decomposition,
    place_full_measurement,
    verify_gains,
)

__all__ = [
    "__version__",
    "ConvergenceError",
    "LqrProblem",
    "lqr_gain",
    "solve_care",
    "SingularEquationError",
    "PlacementError",
    "place_poles",
    "place_state_feedback",
    "SCENARIO_NAMES",
    "Scenario",
    "builtin_scenario",
    "controller_gain",
    "gains_for_scenario",
    "run_scenario",
    "InstabilityError",
    "Signal",
    "SimConfig",
    "Trajectory",
    "convergence_time",
    "estimate_disturbance",
    "simulate",
    "ExistenceReport",
    "GainsCheck",
    "LinearSystem",
    "NoUioError",
    "ObservableDecomposition",
    "UioGains",
    "check_existence",
    "compute_decoupling",
    "design",
    "detectability",
    "observable_decomposition",
    "place_full_measurement",
    "verify_gains",
]
