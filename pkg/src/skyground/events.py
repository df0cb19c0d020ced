"""Causal scene editing: weather, timed events, and counterfactual pairing.

Event *application* happens inside the world step (phase 1); this module
owns the declarative side: specs, validation, and config-level edits.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .errors import EditTargetMissing, InvalidEvent
from .ground import serving_phase_index
from .map_core import RoadNetwork

WEATHER_CONDITIONS = ("CLEAR", "CLOUDY", "RAIN")
TIMES_OF_DAY = ("DAY", "DUSK", "NIGHT")
EVENT_KINDS = ("WEATHER_CHANGE", "ROAD_CLOSURE", "ACCIDENT",
               "FALLEN_TREE", "EMERGENCY_DISPATCH")
DISPATCH_CLASSES = ("FIRE_TRUCK", "POLICE_CAR", "AMBULANCE")

# lighting scalar by configured sun phase; arbitrary documented constants
LIGHT_SCALARS = {"DAY": 1.0, "DUSK": 0.45, "NIGHT": 0.15}


@dataclass(frozen=True)
class WeatherState:
    condition: str = "CLEAR"
    time_of_day: str = "DAY"
    rain_intensity: float = 0.0

    def __post_init__(self):
        if self.condition not in WEATHER_CONDITIONS:
            raise ValueError(f"unknown condition {self.condition}")
        if self.time_of_day not in TIMES_OF_DAY:
            raise ValueError(f"unknown time_of_day {self.time_of_day}")
        if (self.rain_intensity > 0) != (self.condition == "RAIN"):
            raise ValueError("rain_intensity > 0 iff condition is RAIN")
        if not 0.0 <= self.rain_intensity <= 1.0:
            raise ValueError("rain_intensity must be in [0, 1]")

    def to_dict(self) -> dict:
        return {"condition": self.condition, "time_of_day": self.time_of_day,
                "rain_intensity": self.rain_intensity}

    @classmethod
    def from_dict(cls, d: dict) -> "WeatherState":
        return cls(d.get("condition", "CLEAR"), d.get("time_of_day", "DAY"),
                   float(d.get("rain_intensity", 0.0)))


@dataclass(frozen=True)
class EventSpec:
    id: str
    kind: str
    start_tick: int
    duration: int | None  # None = permanent
    params: dict = field(default_factory=dict)

    @property
    def end_tick(self) -> int | None:
        # active on [start_tick, start_tick + duration)
        return None if self.duration is None else self.start_tick + self.duration

    @classmethod
    def from_dict(cls, d: dict) -> "EventSpec":
        return cls(str(d["id"]), str(d["kind"]), int(d["start_tick"]),
                   None if d.get("duration") is None else int(d["duration"]),
                   dict(d.get("params", {})))


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _check_lane_interval(ev: EventSpec, network: RoadNetwork, lane_id, s_lo, s_hi, rep):
    lane = network.lanes.get(lane_id)
    if lane is None:
        rep.errors.append(f"event {ev.id}: unknown lane {lane_id}")
        return
    if not (0 <= s_lo <= s_hi <= lane.length):
        rep.errors.append(f"event {ev.id}: interval [{s_lo}, {s_hi}] outside lane {lane_id}")


def validate_events(events: list[EventSpec], network: RoadNetwork,
                    controllable_signals: set[str] | None = None) -> ValidationReport:
    rep = ValidationReport()
    seen = set()
    closures: list[tuple[str, float, float, str]] = []
    for ev in events:
        if ev.id in seen:
            rep.errors.append(f"duplicate event id {ev.id}")
        seen.add(ev.id)
        if ev.kind not in EVENT_KINDS:
            rep.errors.append(f"event {ev.id}: unknown kind {ev.kind}")
            continue
        if ev.start_tick < 0:
            rep.errors.append(f"event {ev.id}: start_tick must be >= 0")
        if ev.duration is not None and ev.duration <= 0:
            rep.errors.append(f"event {ev.id}: duration must be > 0 or null")
        p = ev.params
        if ev.kind == "WEATHER_CHANGE":
            try:
                WeatherState.from_dict(p.get("weather", {}))
            except (ValueError, KeyError) as e:
                rep.errors.append(f"event {ev.id}: bad weather params: {e}")
        elif ev.kind == "ROAD_CLOSURE":
            lo, hi = float(p.get("s_start", -1)), float(p.get("s_end", -1))
            _check_lane_interval(ev, network, p.get("lane"), lo, hi, rep)
            closures.append((p.get("lane"), lo, hi, ev.id))
        elif ev.kind == "ACCIDENT":
            n = int(p.get("wrecks", 1))
            if n < 1:
                rep.errors.append(f"event {ev.id}: wrecks must be >= 1")
            s = float(p.get("s", -1))
            _check_lane_interval(ev, network, p.get("lane"), s, s, rep)
        elif ev.kind == "FALLEN_TREE":
            if "position" not in p:
                rep.errors.append(f"event {ev.id}: missing position")
            if float(p.get("length", 0)) <= 0:
                rep.errors.append(f"event {ev.id}: length must be > 0")
            for lid in p.get("lanes", []):
                if lid not in network.lanes:
                    rep.errors.append(f"event {ev.id}: unknown lane {lid}")
        elif ev.kind == "EMERGENCY_DISPATCH":
            if p.get("class") not in DISPATCH_CLASSES:
                rep.errors.append(f"event {ev.id}: class must be one of {DISPATCH_CLASSES}")
            route = p.get("route", [])
            if not route:
                rep.errors.append(f"event {ev.id}: empty route")
            for lid in route:
                if lid not in network.lanes:
                    rep.errors.append(f"event {ev.id}: unknown lane {lid}")
            # right-of-way must be servable by every signal along the route
            _check_dispatch_serving(ev, route, network, rep,
                                    controllable_signals or set())
    for i in range(len(closures)):
        for j in range(i + 1, len(closures)):
            a, b = closures[i], closures[j]
            if a[0] == b[0] and a[1] <= b[2] and b[1] <= a[2]:
                rep.warnings.append(
                    f"events {a[3]} and {b[3]}: overlapping closures on lane {a[0]}")
    return rep


def _check_dispatch_serving(ev, route, network, rep, controllable_signals):
    from .errors import NoServingPhase
    for cur, nxt in zip(route, route[1:]):
        for inter in network.intersections.values():
            if (cur, nxt) not in inter.movements or inter.id in controllable_signals:
                continue
            plan = network.plan_for(inter.id)
            if plan is None:
                continue
            try:
                serving_phase_index(plan, inter.movements.index((cur, nxt)))
            except NoServingPhase:
                rep.errors.append(
                    f"event {ev.id}: no phase of {inter.id} serves movement {cur}->{nxt}")


# -- counterfactual pairing ---------------------------------------------------

@dataclass(frozen=True)
class CounterfactualEdit:
    """Exactly one operation against a base scenario document."""
    operation: str  # add_event | remove_event | replace_event_params | replace_weather
    event: dict | None = None       # add_event
    event_id: str | None = None     # remove_event / replace_event_params
    params: dict | None = None      # replace_event_params
    weather: dict | None = None     # replace_weather


def counterfactual_pair(base: dict, edit: CounterfactualEdit) -> tuple[dict, dict]:
    """Return (base, edited) scenario documents differing only in the edit."""
    edited = copy.deepcopy(base)
    events = edited.setdefault("events", [])
    if edit.operation == "add_event":
        if edit.event is None:
            raise InvalidEvent("add_event requires an event object")
        if any(e.get("id") == edit.event.get("id") for e in events):
            raise InvalidEvent(f"event id {edit.event.get('id')} already present")
        events.append(copy.deepcopy(edit.event))
    elif edit.operation == "remove_event":
        idx = [i for i, e in enumerate(events) if e.get("id") == edit.event_id]
        if not idx:
            raise EditTargetMissing(f"no event {edit.event_id} in base")
        del events[idx[0]]
    elif edit.operation == "replace_event_params":
        idx = [i for i, e in enumerate(events) if e.get("id") == edit.event_id]
        if not idx:
            raise EditTargetMissing(f"no event {edit.event_id} in base")
        events[idx[0]]["params"] = copy.deepcopy(edit.params or {})
    elif edit.operation == "replace_weather":
        if edit.weather is None:
            raise InvalidEvent("replace_weather requires a weather object")
        edited["weather"] = copy.deepcopy(edit.weather)
    else:
        raise InvalidEvent(f"unknown edit operation {edit.operation}")
    return copy.deepcopy(base), edited


def structural_diff(a, b, path="$") -> list[str]:
    """Paths at which two JSON documents differ."""
    if type(a) is not type(b):
        return [path]
    if isinstance(a, dict):
        out = []
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append(f"{path}.{k}")
            else:
                out.extend(structural_diff(a[k], b[k], f"{path}.{k}"))
        return out
    if isinstance(a, list):
        if len(a) != len(b):
            return [path]
        out = []
        for i, (x, y) in enumerate(zip(a, b)):
            out.extend(structural_diff(x, y, f"{path}[{i}]"))
        return out
    return [] if a == b else [path]


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))
