"""Spacecraft-inspection simulation with PPO training and robust evaluation."""

from .dynamics import ControlInput, CwParams, DeputyState, SunState
from .environment import EpisodeConfig, InspectionEnv
from .geometry import InspectionPointSet, generate_sphere_points

__all__ = [
    "ControlInput",
    "CwParams",
    "DeputyState",
    "SunState",
    "EpisodeConfig",
    "InspectionEnv",
    "InspectionPointSet",
    "generate_sphere_points",
]

__version__ = "0.1.0"
