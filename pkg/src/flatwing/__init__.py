"""Flatness-based trajectory optimization for fixed-wing UAVs.

The vehicle state and load-factor controls are recovered from a flat output
(position and its derivatives), so the planner optimizes quintic spline
waypoints and the flight duration with L-BFGS against penalty-augmented costs.
"""

from __future__ import annotations

from .errors import (
    DegenerateEndpoints,
    FlatwingError,
    Infeasible,
    InitFailure,
    InvalidScenario,
    LineSearchFailure,
    NumericalSingular,
    OutOfDomain,
    SingularVelocity,
    SingularVertical,
    ZeroNormalLoad,
)
from .flat import FlatPoint, LoadControls, UavState, inverse_map, map_controls, map_state
from .harness import load_scenario, penetration_scenario, save_scenario, two_cylinder_config, two_cylinder_scenario
from .planner import Solution, SolveReport, feasibility_check, solve
from .problem import Bounds, Obstacle, Scenario, SolverConfig, TimeCost, TimeMode, deg_state
from .spline import Boundary, FlatTrajectory

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "Bounds",
    "DegenerateEndpoints",
    "FlatPoint",
    "FlatTrajectory",
    "FlatwingError",
    "Infeasible",
    "InitFailure",
    "InvalidScenario",
    "LineSearchFailure",
    "LoadControls",
    "NumericalSingular",
    "Obstacle",
    "OutOfDomain",
    "Scenario",
    "SingularVelocity",
    "SingularVertical",
    "Solution",
    "SolveReport",
    "SolverConfig",
    "TimeCost",
    "TimeMode",
    "UavState",
    "ZeroNormalLoad",
    "deg_state",
    "feasibility_check",
    "inverse_map",
    "load_scenario",
    "map_controls",
    "map_state",
    "penetration_scenario",
    "save_scenario",
    "solve",
    "two_cylinder_config",
    "two_cylinder_scenario",
]
