"""Stiff-capable integration of the full system and empirical tipping thresholds."""

from .core import SolveSettings, Trajectory, solve
from .esdirk import esdirk54
from .simulate import (
    EmpiricalResult,
    Outcome,
    RunSetup,
    SimulationTrace,
    classify_outcome,
    empirical_critical,
    run_outcome,
    simulate,
    simulate_backward,
)

__all__ = [
    "SolveSettings",
    "Trajectory",
    "solve",
    "esdirk54",
    "EmpiricalResult",
    "Outcome",
    "RunSetup",
    "SimulationTrace",
    "classify_outcome",
    "empirical_critical",
    "run_outcome",
    "simulate",
    "simulate_backward",
]
