"""Warehouse network design: center-of-gravity MILP, step-well reduction and tooling."""

from .geo import GeoPoint, distance_matrix, haversine_miles, planar_miles
from .model import Customer, Evaluation, ModelError, Scenario, Site, Solution, StateAttr, evaluate
from .pipeline import StepWellConfig, compare, solve_flat, step_well_solve

__version__ = "0.1.0"

__all__ = [
    "GeoPoint", "distance_matrix", "haversine_miles", "planar_miles",
    "Customer", "Evaluation", "ModelError", "Scenario", "Site", "Solution", "StateAttr", "evaluate",
    "StepWellConfig", "compare", "solve_flat", "step_well_solve",
]
