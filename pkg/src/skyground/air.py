"""Kinematic aerial entities: velocity-command point-mass flight,
waypoint following, and pairwise separation checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .geometry import Pose


@dataclass(frozen=True)
class AirState:
    pose: Pose
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    v_max: float = 10.0
    a_max: float = 2.0
    z_min: float = 20.0
    z_max: float = 120.0
    kind: str = "UAV"  # UAV or UAM


@dataclass(frozen=True)
class AirCommand:
    target_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)


def _norm3(v) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def _clip_speed(v, v_max: float):
    n = _norm3(v)
    if n <= v_max or n == 0.0:
        return v
    k = v_max / n
    return (v[0] * k, v[1] * k, v[2] * k)


def air_step(state: AirState, cmd: AirCommand, dt: float) -> AirState:
    """One semi-implicit Euler step toward the commanded velocity."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    desired = _clip_speed(cmd.target_velocity, state.v_max)
    dv = (desired[0] - state.velocity[0],
          desired[1] - state.velocity[1],
          desired[2] - state.velocity[2])
    dv_norm = _norm3(dv)
    limit = state.a_max * dt
    if dv_norm > limit:
        k = limit / dv_norm
        dv = (dv[0] * k, dv[1] * k, dv[2] * k)
    v = (state.velocity[0] + dv[0], state.velocity[1] + dv[1], state.velocity[2] + dv[2])
    v = _clip_speed(v, state.v_max)
    z = min(max(state.pose.z + v[2] * dt, 0.0), state.z_max)
    if math.hypot(v[0], v[1]) > 0.1:
        heading = math.atan2(v[1], v[0])
    else:
        heading = state.pose.heading
    pose = Pose(state.pose.x + v[0] * dt, state.pose.y + v[1] * dt, z, heading)
    return replace(state, pose=pose, velocity=v)


def waypoint_controller(state: AirState, waypoints, index: int,
                        arrive_radius: float, dt_nominal: float) -> tuple[AirCommand, int]:
    """Velocity command toward waypoints[index]; returns (command, new index).

    Arrival within arrive_radius advances the index; past the last waypoint
    the command is hover.
    """
    p = (state.pose.x, state.pose.y, state.pose.z)
    while index < len(waypoints):
        w = waypoints[index]
        d = math.sqrt((w[0] - p[0]) ** 2 + (w[1] - p[1]) ** 2 + (w[2] - p[2]) ** 2)
        if d > arrive_radius:
            break
        index += 1
    if index >= len(waypoints):
        return AirCommand((0.0, 0.0, 0.0)), index
    w = waypoints[index]
    d = math.sqrt((w[0] - p[0]) ** 2 + (w[1] - p[1]) ** 2 + (w[2] - p[2]) ** 2)
    speed = min(state.v_max, d / dt_nominal)
    k = speed / d
    return AirCommand(((w[0] - p[0]) * k, (w[1] - p[1]) * k, (w[2] - p[2]) * k)), index


def separation_violations(states: dict[str, AirState],
                          h_min: float, v_min: float) -> list[tuple[str, str]]:
    """Unordered id pairs closer than both thresholds, lexicographic order."""
    ids = sorted(states)
    out = []
    for i, a in enumerate(ids):
        sa = states[a]
        for b in ids[i + 1:]:
            sb = states[b]
            dh = math.hypot(sa.pose.x - sb.pose.x, sa.pose.y - sb.pose.y)
            dv = abs(sa.pose.z - sb.pose.z)
            if dh < h_min and dv < v_min:
                out.append((a, b))
    return out
