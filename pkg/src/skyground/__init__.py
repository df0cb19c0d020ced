"""Deterministic desk-scale air-ground co-simulation engine."""

from .config import ScenarioConfig, load_config
from .env import Env, PROTOCOL_VERSION
from .world import WorldState, observe, reset_world, restore, snapshot, step

__all__ = [
    "Env", "PROTOCOL_VERSION", "ScenarioConfig", "WorldState",
    "load_config", "observe", "reset_world", "restore", "snapshot", "step",
]

__version__ = "0.1.0"
