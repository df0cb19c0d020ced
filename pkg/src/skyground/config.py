"""Scenario configuration: one JSON document describing map, demand,
controllables, cameras, events, comms, and seeds.

The raw document is kept alongside the parsed view so counterfactual
pairing and structural diffs operate on exactly what the user wrote.
"""
from __future__ import annotations

import copy
import fnmatch
import json
from dataclasses import dataclass, field
from pathlib import Path

from .comms import ChannelParams
from .errors import ConfigInvalid, MalformedFile, SkygroundError
from .events import EventSpec, ValidationReport, WeatherState, validate_events
from .ground import IdmParams
from .map_core import RoadNetwork, load_network, load_network_dict

REWARD_HOOKS = ("zero", "negative_mean_delay", "throughput")


@dataclass(frozen=True)
class CameraSpec:
    id: str
    mount_type: str            # fixed | entity
    mount_pose: tuple[float, float, float, float] | None  # fixed pose
    mount_entity: str | None
    mount_offset: tuple[float, float, float, float]       # body-frame offset
    width: int
    height: int
    hfov: float
    pitch: float               # rotation about camera +y; <0 looks down
    modalities: tuple[str, ...]
    near: float
    far: float

    @classmethod
    def from_dict(cls, d: dict) -> "CameraSpec":
        mount = d.get("mount", {})
        mtype = mount.get("type", "fixed")
        if mtype not in ("fixed", "entity"):
            raise MalformedFile(f"camera {d.get('id')}: bad mount type {mtype}")
        mods = tuple(d.get("modalities", ["RGB", "SEMANTIC", "DEPTH"]))
        if not mods or any(m not in ("RGB", "SEMANTIC", "DEPTH") for m in mods):
            raise MalformedFile(f"camera {d.get('id')}: bad modalities {mods}")
        w, h = int(d.get("width", 64)), int(d.get("height", 64))
        if not (0 < w <= 4096 and 0 < h <= 4096):
            raise MalformedFile(f"camera {d.get('id')}: resolution out of bounds")
        hfov = float(d.get("hfov", 1.5707963267948966))
        if not 0.0 < hfov < 3.141592653589793:
            raise MalformedFile(f"camera {d.get('id')}: hfov outside (0, pi)")
        near, far = float(d.get("near", 0.5)), float(d.get("far", 500.0))
        if near <= 0 or far <= near:
            raise MalformedFile(f"camera {d.get('id')}: need 0 < near < far")
        return cls(
            id=str(d["id"]), mount_type=mtype,
            mount_pose=tuple(float(v) for v in mount["pose"]) if mtype == "fixed" else None,
            mount_entity=mount.get("entity"),
            mount_offset=tuple(float(v) for v in mount.get("offset", (0, 0, 0, 0))),
            width=w, height=h, hfov=hfov, pitch=float(d.get("pitch", 0.0)),
            modalities=mods, near=near, far=far,
        )


@dataclass(frozen=True)
class FlowSpec:
    id: str
    route: tuple[str, ...]
    rate: float          # vehicles per second
    cls: str = "CAR"
    depart_speed: float | None = None


@dataclass(frozen=True)
class TripSpec:
    id: str
    route: tuple[str, ...]
    cls: str = "CAR"
    depart: int = 0
    start_s: float = 0.0
    speed: float = 0.0
    priority: bool = False


@dataclass(frozen=True)
class WalkerSpec:
    id: str
    waypoints: tuple[tuple[float, float], ...]
    speed: float = 1.4
    depart: int = 0


@dataclass(frozen=True)
class AirSpawnSpec:
    id: str
    kind: str            # UAV | UAM
    spawn: tuple[float, float, float]
    waypoints: tuple[tuple[float, float, float], ...] = ()
    v_max: float = 10.0
    a_max: float = 2.0
    z_min: float = 20.0
    z_max: float = 120.0
    arrive_radius: float = 2.0


@dataclass
class ScenarioConfig:
    raw: dict
    base_dir: Path
    network: RoadNetwork
    seed: int
    step_length: float
    horizon: int
    subsystems: dict[str, bool]
    idm: dict[str, IdmParams]          # per entity class, "default" fallback
    pedestrian_speed: float
    preempt_distance: float
    flows: tuple[FlowSpec, ...]
    trips: tuple[TripSpec, ...]
    walkers: tuple[WalkerSpec, ...]
    air_entities: tuple[AirSpawnSpec, ...]
    controllable_patterns: tuple[str, ...]
    cameras: tuple[CameraSpec, ...]
    events: tuple[EventSpec, ...]
    comms: ChannelParams
    reward: dict
    weather: WeatherState
    perception_range: float = 50.0
    separation: dict = field(default_factory=lambda: {"h_min": 10.0, "v_min": 5.0})

    def is_controllable(self, entity_id: str) -> bool:
        return any(fnmatch.fnmatchcase(entity_id, p) for p in self.controllable_patterns)

    def idm_for(self, cls: str) -> IdmParams:
        return self.idm.get(cls, self.idm["default"])

    def camera(self, camera_id: str) -> CameraSpec | None:
        for c in self.cameras:
            if c.id == camera_id:
                return c
        return None


def _idm_table(doc: dict) -> dict[str, IdmParams]:
    table = {"default": IdmParams()}
    for cls, params in doc.get("idm", {}).items():
        table[cls] = IdmParams(**{k: float(v) for k, v in params.items()})
    return table


def parse_config(doc: dict, base_dir: Path, network: RoadNetwork | None = None) -> ScenarioConfig:
    if network is None:
        map_ref = doc.get("map")
        if isinstance(map_ref, dict):
            network = load_network_dict(map_ref)
        elif map_ref:
            network = load_network(base_dir / map_ref)
        else:
            raise MalformedFile("config: missing 'map'")
    subsystems = {"air": True, "comms": True, "sensors": True}
    subsystems.update(doc.get("subsystems", {}))
    demand = doc.get("demand", {})
    flows = tuple(
        FlowSpec(str(f["id"]), tuple(f["route"]), float(f["rate"]),
                 f.get("class", "CAR"),
                 None if f.get("depart_speed") is None else float(f["depart_speed"]))
        for f in demand.get("flows", []))
    trips = tuple(
        TripSpec(str(t["id"]), tuple(t["route"]), t.get("class", "CAR"),
                 int(t.get("depart", 0)), float(t.get("start_s", 0.0)),
                 float(t.get("speed", 0.0)), bool(t.get("priority", False)))
        for t in demand.get("trips", []))
    walkers = tuple(
        WalkerSpec(str(w["id"]), tuple((float(p[0]), float(p[1])) for p in w["waypoints"]),
                   float(w.get("speed", doc.get("pedestrian_speed", 1.4))),
                   int(w.get("depart", 0)))
        for w in doc.get("pedestrians", []))
    air = tuple(
        AirSpawnSpec(str(a["id"]), a.get("kind", "UAV"),
                     tuple(float(v) for v in a["spawn"]),
                     tuple(tuple(float(v) for v in w) for w in a.get("waypoints", [])),
                     float(a.get("v_max", 10.0)), float(a.get("a_max", 2.0)),
                     float(a.get("z_min", 20.0)), float(a.get("z_max", 120.0)),
                     float(a.get("arrive_radius", 2.0)))
        for a in doc.get("air_entities", []))
    reward = dict(doc.get("reward", {"name": "zero"}))
    if reward.get("name", "zero") not in REWARD_HOOKS:
        raise MalformedFile(f"config: unknown reward hook {reward.get('name')}")
    sep = {"h_min": 10.0, "v_min": 5.0}
    sep.update({k: float(v) for k, v in doc.get("separation", {}).items()})
    return ScenarioConfig(
        raw=doc, base_dir=base_dir, network=network,
        seed=int(doc.get("seed", 0)),
        step_length=float(doc.get("step_length", 0.1)),
        horizon=int(doc.get("horizon", 1000)),
        subsystems=subsystems,
        idm=_idm_table(doc),
        pedestrian_speed=float(doc.get("pedestrian_speed", 1.4)),
        preempt_distance=float(doc.get("preempt_distance", 100.0)),
        flows=flows, trips=trips, walkers=walkers, air_entities=air,
        controllable_patterns=tuple(doc.get("controllables", [])),
        cameras=tuple(CameraSpec.from_dict(c) for c in doc.get("cameras", [])),
        events=tuple(EventSpec.from_dict(e) for e in doc.get("events", [])),
        comms=ChannelParams.from_dict(doc.get("comms", {})),
        reward=reward,
        weather=WeatherState.from_dict(doc.get("weather", {})),
        perception_range=float(doc.get("perception_range", 50.0)),
        separation=sep,
    )


def validate_config(cfg: ScenarioConfig) -> ValidationReport:
    """Full scenario validation; map invariants were enforced at load."""
    controllable_signals = {i for i in cfg.network.intersections if cfg.is_controllable(i)}
    rep = validate_events(list(cfg.events), cfg.network, controllable_signals)
    lanes = cfg.network.lanes
    for f in cfg.flows:
        if f.rate < 0:
            rep.errors.append(f"flow {f.id}: negative rate")
        _check_route(f.id, f.route, lanes, rep)
    for t in cfg.trips:
        _check_route(t.id, t.route, lanes, rep)
        if t.route and t.route[0] in lanes and not 0 <= t.start_s <= lanes[t.route[0]].length:
            rep.errors.append(f"trip {t.id}: start_s outside entry lane")
    for a in cfg.air_entities:
        if a.kind not in ("UAV", "UAM"):
            rep.errors.append(f"air entity {a.id}: kind must be UAV or UAM")
        if not a.z_min < a.z_max:
            rep.errors.append(f"air entity {a.id}: need z_min < z_max")
    for c in cfg.cameras:
        if c.mount_type == "entity" and c.mount_entity is None:
            rep.errors.append(f"camera {c.id}: entity mount without entity id")
    if cfg.step_length <= 0:
        rep.errors.append("step_length must be > 0")
    if cfg.horizon < 0:
        rep.errors.append("horizon must be >= 0")
    return rep


def _check_route(owner: str, route, lanes, rep):
    if not route:
        rep.errors.append(f"{owner}: empty route")
        return
    for lid in route:
        if lid not in lanes:
            rep.errors.append(f"{owner}: unknown lane {lid}")
            return
    for cur, nxt in zip(route, route[1:]):
        lane = lanes[cur]
        if nxt not in lane.successor_ids and nxt not in (lane.left_id, lane.right_id):
            rep.errors.append(f"{owner}: lanes {cur} -> {nxt} not connected")


def load_config(path, seed_override: int | None = None) -> ScenarioConfig:
    """Load, parse, and validate a scenario file; raises ConfigInvalid."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedFile(f"{path}: {e}") from e
    return config_from_dict(doc, path.parent, seed_override)


def config_from_dict(doc: dict, base_dir=".", seed_override: int | None = None) -> ScenarioConfig:
    doc = copy.deepcopy(doc)
    if seed_override is not None:
        doc["seed"] = int(seed_override)
    try:
        cfg = parse_config(doc, Path(base_dir))
    except SkygroundError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFile(f"config: {e}") from e
    rep = validate_config(cfg)
    if not rep.ok:
        raise ConfigInvalid(rep)
    return cfg
