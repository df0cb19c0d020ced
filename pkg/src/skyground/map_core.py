"""Static world geometry: lanes, intersections, signal plans, buildings.

Loaded from a declarative JSON map file (schema in docs/map_format.md) and
immutable afterwards, so a single RoadNetwork can be shared freely.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConflictViolation,
    DanglingReference,
    EmptyNetwork,
    InvalidGeometry,
    MalformedFile,
    OutOfRange,
)
from .geometry import Pose, project_point_on_segment

ENTITY_CLASSES = (
    "CAR", "BUS", "TRUCK", "FIRE_TRUCK", "POLICE_CAR", "AMBULANCE",
    "PEDESTRIAN", "UAV", "UAM", "BARRIER", "WRECK", "FALLEN_TREE",
)
EMERGENCY_CLASSES = ("FIRE_TRUCK", "POLICE_CAR", "AMBULANCE")


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: tuple[tuple[float, float], ...]
    width: float
    speed_limit: float
    allowed_classes: frozenset[str]
    successor_ids: tuple[str, ...]
    left_id: str | None = None
    right_id: str | None = None
    # cumulative arc length at each vertex, filled in __post_init__
    cum: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        cum = [0.0]
        for (ax, ay), (bx, by) in zip(self.centerline, self.centerline[1:]):
            cum.append(cum[-1] + math.hypot(bx - ax, by - ay))
        object.__setattr__(self, "cum", tuple(cum))

    @property
    def length(self) -> float:
        return self.cum[-1]


@dataclass(frozen=True)
class Intersection:
    id: str
    incoming: tuple[str, ...]
    outgoing: tuple[str, ...]
    movements: tuple[tuple[str, str], ...]
    conflict_matrix: tuple[tuple[bool, ...], ...]

    def conflicts(self, i: int, j: int) -> bool:
        return self.conflict_matrix[i][j]


@dataclass(frozen=True)
class SignalPlan:
    intersection_id: str
    phases: tuple[tuple[frozenset[int], int], ...]  # (movement index set, duration ticks)

    @property
    def cycle(self) -> int:
        return sum(d for _, d in self.phases)


@dataclass(frozen=True)
class Building:
    id: str
    center: tuple[float, float]
    size: tuple[float, float]  # footprint extents along local x/y
    yaw: float
    height: float


@dataclass(frozen=True)
class RoadNetwork:
    lanes: dict[str, Lane]
    intersections: dict[str, Intersection]
    signal_plans: tuple[SignalPlan, ...]
    buildings: tuple[Building, ...]

    def plan_for(self, intersection_id: str) -> SignalPlan | None:
        for p in self.signal_plans:
            if p.intersection_id == intersection_id:
                return p
        return None


def _req(obj: dict, key: str, ctx: str):
    if key not in obj:
        raise MalformedFile(f"{ctx}: missing key '{key}'")
    return obj[key]


def _parse_lane(obj: dict) -> Lane:
    lid = str(_req(obj, "id", "lane"))
    pts = _req(obj, "centerline", f"lane {lid}")
    if not isinstance(pts, list) or len(pts) < 2:
        raise InvalidGeometry(f"lane {lid}: centerline needs >= 2 points")
    centerline = tuple((float(p[0]), float(p[1])) for p in pts)
    for (ax, ay), (bx, by) in zip(centerline, centerline[1:]):
        if ax == bx and ay == by:
            raise InvalidGeometry(f"lane {lid}: zero-length segment")
    width = float(_req(obj, "width", f"lane {lid}"))
    if width <= 0:
        raise InvalidGeometry(f"lane {lid}: width must be > 0")
    speed_limit = float(obj.get("speed_limit", 13.9))
    if speed_limit <= 0:
        raise InvalidGeometry(f"lane {lid}: speed_limit must be > 0")
    allowed = frozenset(obj.get("allowed_classes", ["CAR", "BUS", "TRUCK"] + list(EMERGENCY_CLASSES)))
    bad = allowed - set(ENTITY_CLASSES)
    if bad:
        raise MalformedFile(f"lane {lid}: unknown classes {sorted(bad)}")
    return Lane(
        id=lid,
        centerline=centerline,
        width=width,
        speed_limit=speed_limit,
        allowed_classes=allowed,
        successor_ids=tuple(obj.get("successors", [])),
        left_id=obj.get("left"),
        right_id=obj.get("right"),
    )


def _parse_intersection(obj: dict) -> Intersection:
    iid = str(_req(obj, "id", "intersection"))
    movements = tuple((str(a), str(b)) for a, b in _req(obj, "movements", f"intersection {iid}"))
    n = len(movements)
    mat = [[False] * n for _ in range(n)]
    for pair in obj.get("conflicts", []):
        i, j = int(pair[0]), int(pair[1])
        if not (0 <= i < n and 0 <= j < n):
            raise MalformedFile(f"intersection {iid}: conflict index out of range")
        if i == j:
            raise MalformedFile(f"intersection {iid}: movement cannot conflict with itself")
        mat[i][j] = mat[j][i] = True
    return Intersection(
        id=iid,
        incoming=tuple(obj.get("incoming", [])),
        outgoing=tuple(obj.get("outgoing", [])),
        movements=movements,
        conflict_matrix=tuple(tuple(r) for r in mat),
    )


def _parse_plan(obj: dict) -> SignalPlan:
    iid = str(_req(obj, "intersection", "signal_plan"))
    phases = []
    for ph in _req(obj, "phases", f"signal_plan {iid}"):
        dur = int(_req(ph, "duration", f"signal_plan {iid} phase"))
        if dur <= 0:
            raise MalformedFile(f"signal_plan {iid}: phase duration must be > 0")
        phases.append((frozenset(int(m) for m in _req(ph, "movements", f"signal_plan {iid} phase")), dur))
    if not phases:
        raise MalformedFile(f"signal_plan {iid}: needs >= 1 phase")
    return SignalPlan(intersection_id=iid, phases=tuple(phases))


def _parse_building(obj: dict) -> Building:
    bid = str(_req(obj, "id", "building"))
    size = _req(obj, "size", f"building {bid}")
    height = float(_req(obj, "height", f"building {bid}"))
    if height <= 0 or float(size[0]) <= 0 or float(size[1]) <= 0:
        raise InvalidGeometry(f"building {bid}: height and footprint must be positive")
    center = _req(obj, "center", f"building {bid}")
    return Building(
        id=bid,
        center=(float(center[0]), float(center[1])),
        size=(float(size[0]), float(size[1])),
        yaw=float(obj.get("yaw", 0.0)),
        height=height,
    )


def load_network_dict(doc: dict) -> RoadNetwork:
    """Build and validate a RoadNetwork from a parsed map document."""
    if not isinstance(doc, dict):
        raise MalformedFile("map document must be a JSON object")
    lanes = {}
    for obj in doc.get("lanes", []):
        lane = _parse_lane(obj)
        if lane.id in lanes:
            raise MalformedFile(f"duplicate lane id {lane.id}")
        lanes[lane.id] = lane
    intersections = {}
    for obj in doc.get("intersections", []):
        inter = _parse_intersection(obj)
        if inter.id in intersections:
            raise MalformedFile(f"duplicate intersection id {inter.id}")
        intersections[inter.id] = inter
    plans = tuple(_parse_plan(obj) for obj in doc.get("signal_plans", []))
    buildings = tuple(_parse_building(obj) for obj in doc.get("buildings", []))

    # cross-reference validation
    for lane in lanes.values():
        for sid in lane.successor_ids:
            if sid not in lanes:
                raise DanglingReference(f"lane {lane.id}: unknown successor {sid}")
        for adj in (lane.left_id, lane.right_id):
            if adj is not None and adj not in lanes:
                raise DanglingReference(f"lane {lane.id}: unknown adjacent lane {adj}")
    for inter in intersections.values():
        for lid in inter.incoming + inter.outgoing:
            if lid not in lanes:
                raise DanglingReference(f"intersection {inter.id}: unknown lane {lid}")
        for a, b in inter.movements:
            if a not in lanes or b not in lanes:
                raise DanglingReference(f"intersection {inter.id}: movement references unknown lane")
    seen_plan = set()
    for plan in plans:
        if plan.intersection_id not in intersections:
            raise DanglingReference(f"signal_plan: unknown intersection {plan.intersection_id}")
        if plan.intersection_id in seen_plan:
            raise MalformedFile(f"duplicate signal_plan for {plan.intersection_id}")
        seen_plan.add(plan.intersection_id)
        inter = intersections[plan.intersection_id]
        n = len(inter.movements)
        for k, (movs, _dur) in enumerate(plan.phases):
            for m in movs:
                if not 0 <= m < n:
                    raise DanglingReference(
                        f"signal_plan {plan.intersection_id}: movement index {m} out of range")
            ms = sorted(movs)
            for i in range(len(ms)):
                for j in range(i + 1, len(ms)):
                    if inter.conflicts(ms[i], ms[j]):
                        raise ConflictViolation(
                            f"signal_plan {plan.intersection_id} phase {k}: "
                            f"movements {ms[i]} and {ms[j]} conflict")
    return RoadNetwork(lanes=lanes, intersections=intersections,
                       signal_plans=plans, buildings=buildings)


def load_network(path) -> RoadNetwork:
    """Load and validate a map file. Pure: same bytes, same network."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise MalformedFile(f"cannot read {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedFile(f"{path}: {e}") from e
    return load_network_dict(doc)


def lane_to_world(lane: Lane, s: float, lateral: float = 0.0) -> Pose:
    """Pose at arc length s, offset laterally (positive = left of travel)."""
    if not 0.0 <= s <= lane.length + 1e-9:
        raise OutOfRange(f"s={s} outside [0, {lane.length}]")
    if abs(lateral) > lane.width / 2 + 1e-9:
        raise OutOfRange(f"lateral={lateral} outside half-width {lane.width / 2}")
    s = min(s, lane.length)
    # locate containing segment; a vertex belongs to the following segment
    pts, cum = lane.centerline, lane.cum
    idx = len(pts) - 2
    for i in range(len(pts) - 1):
        if s < cum[i + 1] or i == len(pts) - 2:
            idx = i
            break
    ax, ay = pts[idx]
    bx, by = pts[idx + 1]
    seg_len = cum[idx + 1] - cum[idx]
    t = (s - cum[idx]) / seg_len
    heading = math.atan2(by - ay, bx - ax)
    # left normal of travel direction
    nx, ny = -math.sin(heading), math.cos(heading)
    return Pose(ax + t * (bx - ax) + lateral * nx,
                ay + t * (by - ay) + lateral * ny,
                0.0, heading)


def project_to_lane(lane: Lane, x: float, y: float) -> tuple[float, float]:
    """Closest (s, distance) on a lane centerline for a world point."""
    best_s, best_d = 0.0, float("inf")
    pts, cum = lane.centerline, lane.cum
    for i in range(len(pts) - 1):
        ax, ay = pts[i]
        bx, by = pts[i + 1]
        t, _qx, _qy, d = project_point_on_segment(x, y, ax, ay, bx, by)
        if d < best_d:
            best_d = d
            best_s = cum[i] + t * (cum[i + 1] - cum[i])
    return best_s, best_d


def nearest_lane(network: RoadNetwork, point) -> tuple[str, float, float]:
    """Lane minimizing distance to the point; ties broken by lane id."""
    if not network.lanes:
        raise EmptyNetwork("network has no lanes")
    x, y = float(point[0]), float(point[1])
    best = None
    for lid in sorted(network.lanes):
        s, d = project_to_lane(network.lanes[lid], x, y)
        if best is None or d < best[2] - 1e-12:
            best = (lid, s, d)
    return best
