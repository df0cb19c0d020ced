"""Entity state shared by ground, air, pedestrian, and obstacle kinds."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .geometry import Pose
from .map_core import EMERGENCY_CLASSES, ENTITY_CLASSES

GROUND_VEHICLE_CLASSES = ("CAR", "BUS", "TRUCK") + EMERGENCY_CLASSES
AIR_CLASSES = ("UAV", "UAM")
OBSTACLE_CLASSES = ("BARRIER", "WRECK", "FALLEN_TREE")

DEFAULT_BBOX = {
    "CAR": (4.5, 1.8, 1.5),
    "BUS": (12.0, 2.5, 3.2),
    "TRUCK": (8.0, 2.5, 3.0),
    "FIRE_TRUCK": (7.0, 2.4, 3.0),
    "POLICE_CAR": (4.8, 1.9, 1.5),
    "AMBULANCE": (5.5, 2.2, 2.5),
    "PEDESTRIAN": (0.5, 0.5, 1.7),
    "UAV": (0.6, 0.6, 0.3),
    "UAM": (6.0, 6.0, 2.0),
    "BARRIER": (2.0, 0.6, 1.0),
    "WRECK": (4.5, 1.8, 1.2),
    "FALLEN_TREE": (8.0, 0.8, 0.8),
}

BASE_COLOR = {
    "CAR": (70, 90, 180),
    "BUS": (200, 160, 40),
    "TRUCK": (90, 120, 90),
    "FIRE_TRUCK": (210, 40, 40),
    "POLICE_CAR": (30, 30, 160),
    "AMBULANCE": (235, 235, 235),
    "PEDESTRIAN": (220, 150, 120),
    "UAV": (40, 40, 40),
    "UAM": (160, 160, 210),
    "BARRIER": (240, 120, 30),
    "WRECK": (60, 50, 50),
    "FALLEN_TREE": (80, 110, 40),
}


@dataclass(frozen=True)
class EntityState:
    id: str
    cls: str
    pose: Pose
    speed: float = 0.0                                   # ground scalar speed
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)  # air velocity
    bbox: tuple[float, float, float] = (4.5, 1.8, 1.5)
    control: str = "background"                          # controllable | background
    lane_ref: tuple[str, float] | None = None            # (lane id, s) for lane movers
    priority: bool = False
    route: tuple[str, ...] = ()
    route_index: int = 0
    waypoints: tuple[tuple[float, ...], ...] = ()        # air 3-D / pedestrian 2-D
    wp_index: int = 0
    v_max: float = 10.0
    a_max_air: float = 2.0
    z_min: float = 20.0
    z_max: float = 120.0
    arrive_radius: float = 2.0
    target_speed: float = 1.4                            # pedestrian walk speed
    source_event: str | None = None                      # obstacle provenance

    def __post_init__(self):
        if self.cls not in ENTITY_CLASSES:
            raise ValueError(f"unknown entity class {self.cls}")
        if any(d <= 0 for d in self.bbox):
            raise ValueError("bbox dimensions must be > 0")

    @property
    def is_ground_vehicle(self) -> bool:
        return self.cls in GROUND_VEHICLE_CLASSES

    @property
    def is_air(self) -> bool:
        return self.cls in AIR_CLASSES

    @property
    def is_obstacle(self) -> bool:
        return self.cls in OBSTACLE_CLASSES

    def with_(self, **kw) -> "EntityState":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "cls": self.cls, "pose": self.pose.to_list(),
            "speed": self.speed, "velocity": list(self.velocity),
            "bbox": list(self.bbox), "control": self.control,
            "lane_ref": list(self.lane_ref) if self.lane_ref else None,
            "priority": self.priority, "route": list(self.route),
            "route_index": self.route_index,
            "waypoints": [list(w) for w in self.waypoints], "wp_index": self.wp_index,
            "v_max": self.v_max, "a_max_air": self.a_max_air,
            "z_min": self.z_min, "z_max": self.z_max,
            "arrive_radius": self.arrive_radius, "target_speed": self.target_speed,
            "source_event": self.source_event,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntityState":
        return cls(
            id=d["id"], cls=d["cls"], pose=Pose.from_list(d["pose"]),
            speed=d["speed"], velocity=tuple(d["velocity"]),
            bbox=tuple(d["bbox"]), control=d["control"],
            lane_ref=tuple(d["lane_ref"]) if d["lane_ref"] else None,
            priority=d["priority"], route=tuple(d["route"]),
            route_index=d["route_index"],
            waypoints=tuple(tuple(w) for w in d["waypoints"]), wp_index=d["wp_index"],
            v_max=d["v_max"], a_max_air=d["a_max_air"],
            z_min=d["z_min"], z_max=d["z_max"],
            arrive_radius=d["arrive_radius"], target_speed=d["target_speed"],
            source_event=d["source_event"],
        )
