"""Deterministic 2-D pedestrian-crowd simulation with holonomic robots."""

from .world import (
    AgentState,
    ContractViolation,
    ObservedAgent,
    Observation,
    PEDESTRIAN,
    PedestrianState,
    ROBOT,
    StepResult,
    World,
    reset,
)
from . import social_force, trajlog

__all__ = [
    "AgentState", "ContractViolation", "ObservedAgent", "Observation",
    "PEDESTRIAN", "PedestrianState", "ROBOT", "StepResult", "World",
    "reset", "social_force", "trajlog",
]
