"""World-frame pose and small vector helpers.

Conventions: x east, y north, z up, all meters. Headings are radians in
[-pi, pi), 0 along +x, counter-clockwise positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    return a - math.pi


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.z, self.heading]

    @classmethod
    def from_list(cls, v) -> "Pose":
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]))


def dist2(ax: float, ay: float, bx: float, by: float) -> float:
    return math.hypot(ax - bx, ay - by)


def dist3(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def project_point_on_segment(px, py, ax, ay, bx, by):
    """Return (t, qx, qy, distance): closest point q = a + t*(b-a), t clamped to [0,1]."""
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 <= 0.0:
        return 0.0, ax, ay, dist2(px, py, ax, ay)
    t = ((px - ax) * vx + (py - ay) * vy) / L2
    t = min(1.0, max(0.0, t))
    qx, qy = ax + t * vx, ay + t * vy
    return t, qx, qy, dist2(px, py, qx, qy)
