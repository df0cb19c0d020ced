"""Fixed-width numeric views of protocol observations and actions.

Learners need static array shapes, so the variable-length parts of an
observation (neighbors, active signal movements) are packed into fixed
slots with explicit presence/activity flags and zero padding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ActionOutOfSchema

WEATHER_CONDITIONS = ("CLEAR", "CLOUDY", "RAIN")
TIMES_OF_DAY = ("DAY", "DUSK", "NIGHT")

EGO_FEATURES = 8          # x, y, z, heading, speed, vx, vy, vz
NEIGHBOR_FEATURES = 6     # presence, dx, dy, dz, speed, heading
SIGNAL_SLOTS = 8          # activity bit per movement index 0..7
WEATHER_FEATURES = len(WEATHER_CONDITIONS) + len(TIMES_OF_DAY)

GROUND_CLASSES = ("CAR", "BUS", "TRUCK", "FIRE_TRUCK", "POLICE_CAR", "AMBULANCE")
AIR_CLASSES = ("UAV", "UAM")

LANE_CHANGE_CODES = {0: "keep", 1: "left", 2: "right"}
LANE_CHANGE_NAMES = {v: k for k, v in LANE_CHANGE_CODES.items()}


def feature_width(k_neighbors: int) -> int:
    return EGO_FEATURES + k_neighbors * NEIGHBOR_FEATURES + SIGNAL_SLOTS + WEATHER_FEATURES


def encode_observation(obs: dict, k_neighbors: int) -> np.ndarray:
    """Flatten one observation payload into a fixed-width float vector."""
    out = np.zeros(feature_width(k_neighbors), dtype=np.float64)
    ego = obs["ego"]
    pose = ego["pose"]
    out[0:4] = pose
    out[4] = ego["speed"]
    out[5:8] = ego["velocity"]
    base = EGO_FEATURES
    for i, nb in enumerate(obs["neighbors"][:k_neighbors]):
        o = base + i * NEIGHBOR_FEATURES
        npose = nb["pose"]
        out[o] = 1.0
        out[o + 1] = npose[0] - pose[0]
        out[o + 2] = npose[1] - pose[1]
        out[o + 3] = npose[2] - pose[2]
        out[o + 4] = nb["speed"]
        out[o + 5] = npose[3]
    base += k_neighbors * NEIGHBOR_FEATURES
    for m in obs.get("signal_view") or ():
        if 0 <= m < SIGNAL_SLOTS:
            out[base + m] = 1.0
    base += SIGNAL_SLOTS
    condition, time_of_day = obs["weather_tag"].split("/")
    if condition in WEATHER_CONDITIONS:
        out[base + WEATHER_CONDITIONS.index(condition)] = 1.0
    if time_of_day in TIMES_OF_DAY:
        out[base + len(WEATHER_CONDITIONS) + TIMES_OF_DAY.index(time_of_day)] = 1.0
    return out


@dataclass(frozen=True)
class ActionBounds:
    accel_min: float = -9.0
    accel_max: float = 2.0
    air_speed: float = 10.0
    walk_speed: float = 2.0


def _vector(action, length: int) -> list[float]:
    try:
        vals = [float(v) for v in action]
    except (TypeError, ValueError) as e:
        raise ActionOutOfSchema(f"action must be a numeric sequence: {e}") from e
    if len(vals) != length:
        raise ActionOutOfSchema(f"expected {length} entries, got {len(vals)}")
    if any(not math.isfinite(v) for v in vals):
        raise ActionOutOfSchema("action entries must be finite")
    return vals


def encode_action(action, cls: str, bounds: ActionBounds) -> tuple[dict, bool]:
    """Action vector -> protocol object; returns (object, clipped flag)."""
    if cls in GROUND_CLASSES:
        accel, lc = _vector(action, 2)
        if lc not in LANE_CHANGE_CODES:
            raise ActionOutOfSchema(f"lane change code must be 0/1/2, got {lc}")
        clipped = not bounds.accel_min <= accel <= bounds.accel_max
        accel = min(max(accel, bounds.accel_min), bounds.accel_max)
        return {"accel": accel, "lane_change": LANE_CHANGE_CODES[lc]}, clipped
    if cls in AIR_CLASSES:
        v = _vector(action, 3)
        clipped = any(abs(c) > bounds.air_speed for c in v)
        v = [min(max(c, -bounds.air_speed), bounds.air_speed) for c in v]
        return {"target_velocity": v}, clipped
    if cls == "PEDESTRIAN":
        (speed,) = _vector(action, 1)
        clipped = not 0.0 <= speed <= bounds.walk_speed
        return {"target_speed": min(max(speed, 0.0), bounds.walk_speed)}, clipped
    raise ActionOutOfSchema(f"no action schema for class {cls}")


def decode_action(obj: dict, cls: str) -> np.ndarray:
    """Protocol object -> action vector; inverse of encode_action in-schema."""
    if cls in GROUND_CLASSES:
        lc = obj.get("lane_change", "keep")
        if lc not in LANE_CHANGE_NAMES:
            raise ActionOutOfSchema(f"unknown lane change {lc!r}")
        return np.array([obj.get("accel", 0.0), LANE_CHANGE_NAMES[lc]],
                        dtype=np.float64)
    if cls in AIR_CLASSES:
        return np.array(obj.get("target_velocity", (0.0, 0.0, 0.0)),
                        dtype=np.float64)
    if cls == "PEDESTRIAN":
        return np.array([obj.get("target_speed", 0.0)], dtype=np.float64)
    raise ActionOutOfSchema(f"no action schema for class {cls}")


def neutral_action(cls: str) -> np.ndarray:
    if cls in GROUND_CLASSES:
        return np.zeros(2)
    if cls in AIR_CLASSES:
        return np.zeros(3)
    if cls == "PEDESTRIAN":
        return np.zeros(1)
    raise ActionOutOfSchema(f"no action schema for class {cls}")
