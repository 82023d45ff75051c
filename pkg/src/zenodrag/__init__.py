"""Measurement-driven k-SAT solving by multi-channel Zeno dragging."""

from . import bounds, control, dynamics, operators, qubit, sat, seeding
from .control import ControlProblem, GrapeConfig, OptimizationResult, nesterov_grape
from .dynamics import MeasurementConfig, Schedule
from .sat import SatInstance

__version__ = "0.1.0"

__all__ = [
    "bounds",
    "control",
    "dynamics",
    "operators",
    "qubit",
    "sat",
    "seeding",
    "ControlProblem",
    "GrapeConfig",
    "MeasurementConfig",
    "OptimizationResult",
    "SatInstance",
    "Schedule",
    "nesterov_grape",
    "__version__",
]
