"""Numerical toolkit for tipping and tracking in asymptotically slow-fast ODEs."""

from .config import Config, load_config
from .errors import ASFError, ConfigError
from .heteroclinic import find_connection
from .integrator import SolveSettings, empirical_critical, simulate
from .melnikov import critical_mu_of_sigma, critical_sigma_of_mu, evaluate, trace_critical_curve
from .ramp import RampFunction, builtin_gamma, check_ramp
from .system import (
    CriticalBranch,
    SystemDefinition,
    check_assumption_NH,
    continue_branch,
    custom_system,
    eval_full_rhs,
    pws_limit,
    tipping_pitchfork,
    tracking_cubic,
)
from .tracking import TrackingHypotheses, certify_tracking, tracked_manifold

__version__ = "0.1.0"

__all__ = [
    "ASFError",
    "Config",
    "ConfigError",
    "SolveSettings",
    "TrackingHypotheses",
    "certify_tracking",
    "critical_mu_of_sigma",
    "critical_sigma_of_mu",
    "custom_system",
    "empirical_critical",
    "evaluate",
    "find_connection",
    "load_config",
    "simulate",
    "trace_critical_curve",
    "tracked_manifold",
    "RampFunction",
    "builtin_gamma",
    "check_ramp",
    "CriticalBranch",
    "SystemDefinition",
    "check_assumption_NH",
    "continue_branch",
    "eval_full_rhs",
    "pws_limit",
    "tipping_pitchfork",
    "tracking_cubic",
    "__version__",
]
