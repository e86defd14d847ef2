"""Power-loop designer - full-state feedback design for grid-forming converters."""

__version__ = "0.1.0"
__author__ = "Jose Cordovilla"
__email__ = "jose@example.com"

from .core import PowerLoopDesigner
from .models import (
    DesignConfig,
    DesignReport,
    FeedbackGain,
    PerformanceSpec,
    SetpointEvent,
    SimConfig,
    SystemParams,
    Trajectory,
)
from .pole_design import place_poles, spec_to_targets
from .powerflow_model import linearize, solve_operating_point
from .simulator import simulate_linear, simulate_nonlinear, step_metrics
from .statespace import build_state_space, controllability

__all__ = [
    "PowerLoopDesigner",
    "DesignConfig",
    "DesignReport",
    "FeedbackGain",
    "PerformanceSpec",
    "SetpointEvent",
    "SimConfig",
    "SystemParams",
    "Trajectory",
    "place_poles",
    "spec_to_targets",
    "linearize",
    "solve_operating_point",
    "simulate_linear",
    "simulate_nonlinear",
    "step_metrics",
    "build_state_space",
    "controllability",
]
