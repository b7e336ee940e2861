"""Socially compliant (SVO-weighted) eco-driving control for an AV in a mixed platoon."""

from .objective import FollowerPayoff, Horizon, ObjectiveParams, evaluate_objective, svo_weights
from .pmp import ExogenousTrajectory, PairProblem, SolveReport, SolverConfig, StopReason, solve
from .scenario import LeadProfile, Scenario, SimResult, five_vehicle_preset, run_baseline, run_scenario
from .vehicle_models import (
    CollisionError,
    ControlBounds,
    IdmParams,
    OvrvParams,
    VehicleKind,
    VehicleSpec,
    VehicleState,
)

__version__ = "0.1.0"

__all__ = [
    "CollisionError", "ControlBounds", "ExogenousTrajectory", "FollowerPayoff", "Horizon",
    "IdmParams", "LeadProfile", "ObjectiveParams", "OvrvParams", "PairProblem", "Scenario",
    "SimResult", "SolveReport", "SolverConfig", "StopReason", "VehicleKind", "VehicleSpec",
    "VehicleState", "evaluate_objective", "five_vehicle_preset", "run_baseline",
    "run_scenario", "solve", "svo_weights",
]
