"""Simulation core: world state, the fixed-step scheduler, observation
filtering, demand spawning, snapshots, and trace records.

One step advances the world by a single tick in a fixed phase order:
events, spawning, signals, background policies, controllable actions,
integration, message delivery.  Phases 4-6 read only the tick-t snapshot,
so per-entity evaluation order cannot influence the result.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import rng
from .air import AirCommand, AirState, air_step, separation_violations, waypoint_controller
from .comms import Delivery, Message, make_message, resolve_deliveries
from .config import ScenarioConfig
from .entities import DEFAULT_BBOX, EntityState
from .errors import (
    InvalidAction,
    NotControllable,
    PayloadTooLarge,
    UnknownEntity,
    VersionMismatch,
)
from .events import WeatherState
from .geometry import Pose, dist3
from .ground import idm_accel, lane_change_decide, preempt, signal_state
from .map_core import lane_to_world, project_to_lane

SNAPSHOT_VERSION = "sg-snap/1"


@dataclass
class WorldState:
    config: ScenarioConfig                      # shared, immutable
    tick: int = 0
    entities: dict[str, EntityState] = field(default_factory=dict)
    weather: WeatherState = field(default_factory=WeatherState)
    active_events: frozenset[str] = frozenset()
    # lane id -> ((s_start, s_end, event id), ...): impassable intervals
    lane_blocks: dict[str, tuple[tuple[float, float, str], ...]] = field(default_factory=dict)
    signal_phase_override: dict[str, int] = field(default_factory=dict)
    signal_active: dict[str, tuple[int, ...]] = field(default_factory=dict)
    preempted: dict[str, int] = field(default_factory=dict)
    pending_msgs: tuple[Message, ...] = ()
    msg_seq: dict[str, int] = field(default_factory=dict)
    inboxes: dict[str, tuple[Delivery, ...]] = field(default_factory=dict)
    last_positions: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    event_entities: dict[str, tuple[str, ...]] = field(default_factory=dict)
    spawned_total: int = 0
    despawned_total: int = 0
    info: dict = field(default_factory=dict)
    delivery_log: tuple[Delivery, ...] = ()

    @property
    def network(self):
        return self.config.network

    @property
    def step_length(self) -> float:
        return self.config.step_length

    @property
    def rng_seed(self) -> int:
        return self.config.seed

    def controllable_ids(self) -> list[str]:
        return sorted(e.id for e in self.entities.values() if e.control == "controllable")


@dataclass(frozen=True)
class Observation:
    ego: EntityState
    neighbors: tuple[EntityState, ...]
    signal_view: tuple[int, ...] | None     # nearest intersection's active movements
    signal_intersection: str | None
    inbox: tuple[Delivery, ...]
    weather_tag: str
    tick: int

    def to_dict(self) -> dict:
        return {
            "ego": self.ego.to_dict(),
            "neighbors": [n.to_dict() for n in self.neighbors],
            "signal_view": list(self.signal_view) if self.signal_view is not None else None,
            "signal_intersection": self.signal_intersection,
            "inbox": [
                {"msg_id": d.message.msg_id, "sender": d.message.sender,
                 "send_tick": d.message.send_tick,
                 "payload_b64": d.message.payload_b64()}
                for d in self.inbox
            ],
            "weather_tag": self.weather_tag,
            "tick": self.tick,
        }


# -- construction -------------------------------------------------------------


def _pos3(e: EntityState) -> tuple[float, float, float]:
    return (e.pose.x, e.pose.y, e.pose.z)


def _ground_vehicle(cfg: ScenarioConfig, eid: str, cls: str, route, start_s: float,
                    speed: float, priority: bool, source_event=None) -> EntityState:
    lane = cfg.network.lanes[route[0]]
    s = min(max(start_s, 0.0), lane.length)
    return EntityState(
        id=eid, cls=cls, pose=lane_to_world(lane, s, 0.0),
        speed=speed, bbox=DEFAULT_BBOX[cls],
        control="controllable" if cfg.is_controllable(eid) else "background",
        lane_ref=(lane.id, s), priority=priority, route=tuple(route),
    )


def reset_world(config: ScenarioConfig) -> WorldState:
    """World at tick 0 with initial spawns placed and events activated."""
    w = WorldState(config=config, weather=config.weather)
    for a in config.air_entities:
        pose = Pose(a.spawn[0], a.spawn[1], a.spawn[2], 0.0)
        w.entities[a.id] = EntityState(
            id=a.id, cls=a.kind, pose=pose, bbox=DEFAULT_BBOX[a.kind],
            control="controllable" if config.is_controllable(a.id) else "background",
            waypoints=a.waypoints, v_max=a.v_max, a_max_air=a.a_max,
            z_min=a.z_min, z_max=a.z_max, arrive_radius=a.arrive_radius,
        )
        w.spawned_total += 1
    w.info = _fresh_info()
    _phase_events(w, 0)
    _phase_spawn(w, 0)
    _phase_signals(w, 0)
    for e in w.entities.values():
        w.last_positions[e.id] = _pos3(e)
    w.info["separation_violations"] = len(_current_separations(w))
    return w


def _fresh_info() -> dict:
    return {"blocked_spawns": 0, "spawned": 0, "despawned": 0, "overlaps": 0,
            "separation_violations": 0, "delivered_messages": 0,
            "dropped_messages": 0}


# -- phase 1: events ----------------------------------------------------------


def _phase_events(w: WorldState, tick: int) -> None:
    cfg = w.config
    active = set(w.active_events)
    for ev in cfg.events:
        if ev.start_tick == tick and ev.id not in active:
            _activate_event(w, ev)
            active.add(ev.id)
        elif ev.end_tick is not None and ev.end_tick == tick and ev.id in active:
            _deactivate_event(w, ev)
            active.discard(ev.id)
    w.active_events = frozenset(active)


def _activate_event(w: WorldState, ev) -> None:
    cfg, p = w.config, ev.params
    spawned: list[str] = []
    if ev.kind == "WEATHER_CHANGE":
        w.weather = WeatherState.from_dict(p["weather"])
    elif ev.kind == "ROAD_CLOSURE":
        lane = cfg.network.lanes[p["lane"]]
        lo, hi = float(p["s_start"]), float(p["s_end"])
        blocks = dict(w.lane_blocks)
        blocks[lane.id] = tuple(sorted(blocks.get(lane.id, ()) + ((lo, hi, ev.id),)))
        w.lane_blocks = blocks
        n = max(1, math.ceil((hi - lo) / 10.0)) if hi > lo else 1
        for k in range(n):
            s = min(lo + 10.0 * k, lane.length)
            eid = f"{ev.id}#barrier{k}"
            w.entities[eid] = EntityState(
                id=eid, cls="BARRIER", pose=lane_to_world(lane, s, 0.0),
                bbox=DEFAULT_BBOX["BARRIER"], lane_ref=(lane.id, s),
                source_event=ev.id)
            spawned.append(eid)
    elif ev.kind == "ACCIDENT":
        lane = cfg.network.lanes[p["lane"]]
        s0 = float(p["s"])
        for k in range(int(p.get("wrecks", 1))):
            s = min(s0 + 6.0 * k, lane.length)
            eid = f"{ev.id}#wreck{k}"
            w.entities[eid] = EntityState(
                id=eid, cls="WRECK", pose=lane_to_world(lane, s, 0.0),
                bbox=DEFAULT_BBOX["WRECK"], lane_ref=(lane.id, s),
                source_event=ev.id)
            spawned.append(eid)
    elif ev.kind == "FALLEN_TREE":
        x, y = float(p["position"][0]), float(p["position"][1])
        length = float(p.get("length", 8.0))
        eid = f"{ev.id}#tree"
        w.entities[eid] = EntityState(
            id=eid, cls="FALLEN_TREE", pose=Pose(x, y, 0.0, 0.0),
            bbox=(length, 0.8, 0.8), source_event=ev.id)
        spawned.append(eid)
        blocks = dict(w.lane_blocks)
        for lid in p.get("lanes", []):
            lane = cfg.network.lanes[lid]
            s, _d = project_to_lane(lane, x, y)
            half = length / 2.0
            iv = (max(0.0, s - half), min(lane.length, s + half), ev.id)
            blocks[lid] = tuple(sorted(blocks.get(lid, ()) + (iv,)))
        w.lane_blocks = blocks
    elif ev.kind == "EMERGENCY_DISPATCH":
        eid = f"{ev.id}#veh"
        w.entities[eid] = _ground_vehicle(
            cfg, eid, p["class"], tuple(p["route"]), float(p.get("start_s", 0.0)),
            float(p.get("depart_speed", 0.0)), priority=True, source_event=ev.id,
        ).with_(priority=True, source_event=ev.id)
        # dispatched vehicles run their route to completion; not tracked for removal
        w.spawned_total += 1
        w.info["spawned"] += 1
    w.spawned_total += len(spawned)
    w.info["spawned"] += len(spawned)
    if spawned:
        w.event_entities = {**w.event_entities, ev.id: tuple(spawned)}


def _deactivate_event(w: WorldState, ev) -> None:
    if ev.kind == "WEATHER_CHANGE":
        w.weather = w.config.weather
    removed = w.event_entities.get(ev.id, ())
    for eid in removed:
        if eid in w.entities:
            w.last_positions[eid] = _pos3(w.entities[eid])
            del w.entities[eid]
            w.despawned_total += 1
            w.info["despawned"] += 1
    if removed:
        ee = dict(w.event_entities)
        del ee[ev.id]
        w.event_entities = ee
    if ev.kind in ("ROAD_CLOSURE", "FALLEN_TREE"):
        blocks = {}
        for lid, ivs in w.lane_blocks.items():
            kept = tuple(iv for iv in ivs if iv[2] != ev.id)
            if kept:
                blocks[lid] = kept
        w.lane_blocks = blocks


# -- phase 2: demand ----------------------------------------------------------


def _entry_cell_free(w: WorldState, lane_id: str, needed: float) -> bool:
    for e in w.entities.values():
        if e.lane_ref and e.lane_ref[0] == lane_id:
            s = e.lane_ref[1]
            if s - e.bbox[0] / 2.0 < needed:
                return False
    return True


def _route_closed(w: WorldState, route) -> bool:
    return any(w.lane_blocks.get(lid) for lid in route)


def _phase_spawn(w: WorldState, tick: int) -> None:
    cfg = w.config
    dt = cfg.step_length
    for t in cfg.trips:
        if t.depart == tick and t.id not in w.entities:
            w.entities[t.id] = _ground_vehicle(
                cfg, t.id, t.cls, t.route, t.start_s, t.speed, t.priority)
            w.spawned_total += 1
            w.info["spawned"] += 1
    for wk in cfg.walkers:
        if wk.depart == tick and wk.id not in w.entities:
            x, y = wk.waypoints[0]
            w.entities[wk.id] = EntityState(
                id=wk.id, cls="PEDESTRIAN", pose=Pose(x, y, 0.0, 0.0),
                bbox=DEFAULT_BBOX["PEDESTRIAN"],
                control="controllable" if cfg.is_controllable(wk.id) else "background",
                waypoints=wk.waypoints, wp_index=0, target_speed=wk.speed)
            w.spawned_total += 1
            w.info["spawned"] += 1
    for f in cfg.flows:
        if rng.uniform(cfg.seed, "demand", f.id, tick) >= f.rate * dt:
            continue
        lane = cfg.network.lanes[f.route[0]]
        veh_len = DEFAULT_BBOX[f.cls][0]
        idm = cfg.idm_for(f.cls)
        if _route_closed(w, f.route) or not _entry_cell_free(w, f.route[0], idm.s0 + veh_len):
            w.info["blocked_spawns"] += 1
            continue
        speed = f.depart_speed if f.depart_speed is not None \
            else min(idm.v0, lane.speed_limit)
        eid = f"{f.id}#{tick}"
        w.entities[eid] = _ground_vehicle(cfg, eid, f.cls, f.route, veh_len / 2.0, speed, False)
        w.spawned_total += 1
        w.info["spawned"] += 1


# -- phase 3: signals ---------------------------------------------------------


def _intersection_of_lane(network) -> dict[str, str]:
    out = {}
    for inter in network.intersections.values():
        for lid in inter.incoming:
            out[lid] = inter.id
    return out


def _phase_signals(w: WorldState, tick: int) -> None:
    cfg = w.config
    active: dict[str, tuple[int, ...]] = {}
    preempted: dict[str, int] = {}
    for inter in cfg.network.intersections.values():
        plan = cfg.network.plan_for(inter.id)
        if plan is None:
            continue
        if cfg.is_controllable(inter.id):
            idx = w.signal_phase_override.get(inter.id, 0)
            active[inter.id] = tuple(sorted(plan.phases[idx][0]))
            continue
        approach = _preempt_movement(w, inter)
        if approach is not None:
            preempted[inter.id] = approach
        active[inter.id] = tuple(sorted(preempt(plan, tick, approach)))
    w.signal_active = active
    w.preempted = preempted


def _preempt_movement(w: WorldState, inter) -> int | None:
    cfg = w.config
    best = None
    for eid in sorted(w.entities):
        e = w.entities[eid]
        if not (e.priority and e.is_ground_vehicle and e.lane_ref):
            continue
        lid, s = e.lane_ref
        if lid not in inter.incoming:
            continue
        lane = cfg.network.lanes[lid]
        if lane.length - s > cfg.preempt_distance:
            continue
        nxt = e.route[e.route_index + 1] if e.route_index + 1 < len(e.route) else None
        if nxt is None:
            continue
        try:
            m = inter.movements.index((lid, nxt))
        except ValueError:
            continue
        if best is None or m < best:
            best = m
    return best


# -- phase 4/5: policies and actions ------------------------------------------


@dataclass
class _Plan:
    accel: float = 0.0
    lane_change: str = "keep"
    air_cmd: AirCommand | None = None
    ped_speed: float | None = None
    wp_index: int | None = None


def _lane_occupancy(w: WorldState) -> dict[str, list[tuple[float, str]]]:
    occ: dict[str, list[tuple[float, str]]] = {}
    for e in w.entities.values():
        if e.lane_ref:
            occ.setdefault(e.lane_ref[0], []).append((e.lane_ref[1], e.id))
    for lst in occ.values():
        lst.sort()
    return occ


def _leader_on_lane(occ, lane_id, s, eid):
    for sv, oid in occ.get(lane_id, ()):
        if (sv, oid) > (s, eid):
            return sv, oid
    return None


def _first_on_lane(occ, lane_id):
    lst = occ.get(lane_id, ())
    return lst[0] if lst else None


def _movement_is_red(w: WorldState, e: EntityState, inter, midx: int | None) -> bool:
    active = w.signal_active.get(inter.id)
    if active is None:
        return False
    if midx is None:
        return False
    if inter.id in w.preempted:
        # under preemption only conflicting movements see red
        return any(inter.conflicts(midx, a) for a in active)
    return midx not in active


def _route_next(e: EntityState) -> str | None:
    if e.route_index + 1 < len(e.route):
        return e.route[e.route_index + 1]
    return None


def _mandatory_dir(cfg: ScenarioConfig, e: EntityState) -> str | None:
    lane = cfg.network.lanes[e.lane_ref[0]]
    nxt = _route_next(e)
    if nxt is None or nxt in lane.successor_ids:
        return None
    if nxt == lane.left_id:
        return "left"
    if nxt == lane.right_id:
        return "right"
    if lane.left_id and nxt in cfg.network.lanes[lane.left_id].successor_ids:
        return "left"
    if lane.right_id and nxt in cfg.network.lanes[lane.right_id].successor_ids:
        return "right"
    return None


def _adjacent_gaps(w: WorldState, occ, e: EntityState, target_id: str | None):
    """(leader gap, follower gap, follower speed) on a target lane, or None."""
    if target_id is None:
        return None
    s = e.lane_ref[1]
    lead_gap, fol_gap, fol_v = math.inf, math.inf, 0.0
    for sv, oid in occ.get(target_id, ()):
        other = w.entities[oid]
        if sv > s:
            lead_gap = (sv - other.bbox[0] / 2.0) - (s + e.bbox[0] / 2.0)
            break
        fol_gap = (s - e.bbox[0] / 2.0) - (sv + other.bbox[0] / 2.0)
        fol_v = other.speed
    return (lead_gap, fol_gap, fol_v)


def _vehicle_accel(w: WorldState, e: EntityState, occ, incoming_map) -> float:
    cfg = w.config
    lane = cfg.network.lanes[e.lane_ref[0]]
    s = e.lane_ref[1]
    idm = cfg.idm_for(e.cls)
    v = e.speed
    half = e.bbox[0] / 2.0
    candidates: list[tuple[float, float]] = []  # (gap, leader speed)
    lead = _leader_on_lane(occ, lane.id, s, e.id)
    if lead is not None:
        sv, oid = lead
        other = w.entities[oid]
        candidates.append(((sv - other.bbox[0] / 2.0) - (s + half), other.speed))
    else:
        nxt = _route_next(e)
        if nxt is not None:
            first = _first_on_lane(occ, nxt)
            if first is not None:
                sv, oid = first
                other = w.entities[oid]
                candidates.append(
                    ((lane.length - s - half) + (sv - other.bbox[0] / 2.0), other.speed))
    for lo, _hi, _ev in w.lane_blocks.get(lane.id, ()):
        gap = lo - (s + half)
        if gap > 0.0:
            candidates.append((gap, 0.0))
    inter_id = incoming_map.get(lane.id)
    if inter_id is not None and not e.priority:
        inter = cfg.network.intersections[inter_id]
        nxt = _route_next(e)
        midx = None
        if nxt is not None and (lane.id, nxt) in inter.movements:
            midx = inter.movements.index((lane.id, nxt))
        if _movement_is_red(w, e, inter, midx):
            gap = lane.length - (s + half)
            if gap > 0.0:
                candidates.append((gap, 0.0))
    accel = idm_accel(v, 0.0, math.inf, idm)
    for gap, v_lead in candidates:
        accel = min(accel, idm_accel(v, v_lead, max(gap, 0.01), idm))
    return accel


def _phase_policies(w: WorldState, occ, incoming_map) -> dict[str, _Plan]:
    """Background behavior for every entity, from the current snapshot."""
    cfg = w.config
    plans: dict[str, _Plan] = {}
    for eid in sorted(w.entities):
        e = w.entities[eid]
        plan = _Plan()
        if e.is_ground_vehicle and e.lane_ref and e.control == "background":
            plan.accel = _vehicle_accel(w, e, occ, incoming_map)
            lane = cfg.network.lanes[e.lane_ref[0]]
            mandatory = _mandatory_dir(cfg, e)
            if mandatory is not None:
                plan.lane_change = lane_change_decide(
                    e.speed, mandatory,
                    _adjacent_gaps(w, occ, e, lane.left_id),
                    _adjacent_gaps(w, occ, e, lane.right_id),
                    cfg.idm_for(e.cls))
        elif e.cls == "PEDESTRIAN" and e.control == "background":
            plan.ped_speed = e.target_speed
        elif e.is_air and e.control == "background":
            st = AirState(e.pose, e.velocity, e.v_max, e.a_max_air, e.z_min, e.z_max, e.cls)
            cmd, idx = waypoint_controller(st, e.waypoints, e.wp_index,
                                           e.arrive_radius, cfg.step_length)
            plan.air_cmd = cmd
            plan.wp_index = idx
        elif e.is_air:
            plan.air_cmd = AirCommand((0.0, 0.0, 0.0))  # controllable default: hover
        elif e.cls == "PEDESTRIAN":
            plan.ped_speed = e.target_speed
        plans[eid] = plan
    return plans


def validate_actions(world: WorldState, actions: dict) -> None:
    """Reject the whole action map before any state mutation."""
    cfg = world.config
    for eid in sorted(actions):
        act = actions[eid]
        if not isinstance(act, dict):
            raise InvalidAction(f"{eid}: action must be an object")
        if eid in cfg.network.intersections:
            if not cfg.is_controllable(eid):
                raise NotControllable(f"signal {eid} is not controllable")
            plan = cfg.network.plan_for(eid)
            idx = act.get("phase_index")
            if plan is None or not isinstance(idx, int) or not 0 <= idx < len(plan.phases):
                raise InvalidAction(f"{eid}: bad phase_index {idx}")
            continue
        e = world.entities.get(eid)
        if e is None:
            raise UnknownEntity(eid)
        if e.control != "controllable":
            raise NotControllable(eid)
        if e.is_ground_vehicle:
            idm = cfg.idm_for(e.cls)
            accel = act.get("accel", 0.0)
            if not isinstance(accel, (int, float)) or math.isnan(accel) \
                    or not -idm.b_emergency - 1e-9 <= accel <= idm.a_max + 1e-9:
                raise InvalidAction(f"{eid}: accel {accel} outside bounds")
            if act.get("lane_change", "keep") not in ("keep", "left", "right"):
                raise InvalidAction(f"{eid}: bad lane_change")
        elif e.is_air:
            tv = act.get("target_velocity", (0.0, 0.0, 0.0))
            if len(tv) != 3 or any(not math.isfinite(float(v)) for v in tv):
                raise InvalidAction(f"{eid}: bad target_velocity")
        elif e.cls == "PEDESTRIAN":
            ts = act.get("target_speed", 0.0)
            if not 0.0 <= float(ts) <= 2.0:
                raise InvalidAction(f"{eid}: target_speed outside [0, 2]")
        for msg in act.get("messages", ()):
            payload = _action_payload(msg)
            if len(payload) > cfg.comms.max_payload:
                raise PayloadTooLarge(f"{eid}: payload {len(payload)} bytes")


def _action_payload(msg: dict) -> bytes:
    import base64
    if "payload_b64" in msg:
        return base64.b64decode(msg["payload_b64"])
    return str(msg.get("payload_text", "")).encode("utf-8")


def _apply_actions(w: WorldState, actions: dict, plans: dict[str, _Plan]) -> None:
    cfg = w.config
    for eid in sorted(actions):
        act = actions[eid]
        if eid in cfg.network.intersections:
            w.signal_phase_override[eid] = int(act["phase_index"])
            continue
        e = w.entities[eid]
        plan = plans[eid]
        if e.is_ground_vehicle:
            plan.accel = float(act.get("accel", 0.0))
            plan.lane_change = act.get("lane_change", "keep")
        elif e.is_air:
            tv = act.get("target_velocity", (0.0, 0.0, 0.0))
            plan.air_cmd = AirCommand(tuple(float(v) for v in tv))
        elif e.cls == "PEDESTRIAN":
            plan.ped_speed = float(act.get("target_speed", e.target_speed))
        for msg in act.get("messages", ()):
            seq = w.msg_seq.get(eid, 0)
            m = make_message(eid, msg.get("recipients", "broadcast"),
                             _action_payload(msg), w.tick, seq, cfg.comms, True)
            w.msg_seq[eid] = seq + 1
            w.pending_msgs = w.pending_msgs + (m,)


def _apply_lane_change(w: WorldState, e: EntityState, direction: str) -> EntityState:
    lane = w.config.network.lanes[e.lane_ref[0]]
    target_id = lane.left_id if direction == "left" else lane.right_id
    if target_id is None:
        return e
    target = w.config.network.lanes[target_id]
    s = min(e.lane_ref[1], target.length)
    route = list(e.route)
    if _route_next(e) == target_id:
        route_index = e.route_index + 1
    else:
        route[e.route_index] = target_id
        route_index = e.route_index
    return e.with_(lane_ref=(target_id, s), route=tuple(route), route_index=route_index)


def _integrate(w: WorldState, plans: dict[str, _Plan]) -> None:
    cfg = w.config
    dt = cfg.step_length
    despawn: list[str] = []
    for eid in sorted(w.entities):
        e = w.entities[eid]
        plan = plans.get(eid, _Plan())
        if e.is_ground_vehicle and e.lane_ref:
            if plan.lane_change in ("left", "right"):
                e = _apply_lane_change(w, e, plan.lane_change)
            v = max(0.0, e.speed + plan.accel * dt)
            lane = cfg.network.lanes[e.lane_ref[0]]
            s = e.lane_ref[1] + v * dt
            route_index = e.route_index
            gone = False
            while s > lane.length:
                nxt = e.route[route_index + 1] if route_index + 1 < len(e.route) else None
                if nxt is None:
                    gone = True
                    break
                s -= lane.length
                route_index += 1
                lane = cfg.network.lanes[nxt]
            if gone:
                w.last_positions[eid] = _pos3(e)
                despawn.append(eid)
                continue
            pose = lane_to_world(lane, s, 0.0)
            w.entities[eid] = e.with_(speed=v, lane_ref=(lane.id, s),
                                      route_index=route_index, pose=pose)
        elif e.cls == "PEDESTRIAN":
            speed = plan.ped_speed if plan.ped_speed is not None else e.target_speed
            x, y, idx = e.pose.x, e.pose.y, e.wp_index
            budget = speed * dt
            while idx < len(e.waypoints) and budget > 0.0:
                wx, wy = e.waypoints[idx][0], e.waypoints[idx][1]
                d = math.hypot(wx - x, wy - y)
                if d <= budget:
                    x, y = wx, wy
                    budget -= d
                    idx += 1
                else:
                    x += (wx - x) / d * budget
                    y += (wy - y) / d * budget
                    budget = 0.0
            if idx >= len(e.waypoints):
                w.last_positions[eid] = _pos3(e)
                despawn.append(eid)
                continue
            heading = math.atan2(e.waypoints[idx][1] - y, e.waypoints[idx][0] - x) \
                if (e.waypoints[idx][0], e.waypoints[idx][1]) != (x, y) else e.pose.heading
            w.entities[eid] = e.with_(
                pose=Pose(x, y, 0.0, heading), wp_index=idx,
                target_speed=speed if plan.ped_speed is not None else e.target_speed)
        elif e.is_air:
            st = AirState(e.pose, e.velocity, e.v_max, e.a_max_air, e.z_min, e.z_max, e.cls)
            cmd = plan.air_cmd if plan.air_cmd is not None else AirCommand((0.0, 0.0, 0.0))
            st2 = air_step(st, cmd, dt)
            wp_idx = plan.wp_index if plan.wp_index is not None else e.wp_index
            w.entities[eid] = e.with_(pose=st2.pose, velocity=st2.velocity, wp_index=wp_idx)
    for eid in despawn:
        del w.entities[eid]
        w.despawned_total += 1
        w.info["despawned"] += 1
    # overlap telemetry: bumper intrusion between lane neighbors
    occ = _lane_occupancy(w)
    for lid, lst in occ.items():
        for (s1, id1), (s2, id2) in zip(lst, lst[1:]):
            e1, e2 = w.entities[id1], w.entities[id2]
            if (s2 - e2.bbox[0] / 2.0) - (s1 + e1.bbox[0] / 2.0) < 0.0:
                w.info["overlaps"] += 1


def _current_separations(w: WorldState) -> list[tuple[str, str]]:
    states = {
        e.id: AirState(e.pose, e.velocity, e.v_max, e.a_max_air, e.z_min, e.z_max, e.cls)
        for e in w.entities.values() if e.is_air
    }
    return separation_violations(states, w.config.separation["h_min"],
                                 w.config.separation["v_min"])


def _phase_comms(w: WorldState) -> None:
    positions = {eid: _pos3(e) for eid, e in w.entities.items()}
    still, resolved = resolve_deliveries(
        list(w.pending_msgs), w.tick, w.config.comms, positions,
        w.last_positions, w.config.seed)
    w.pending_msgs = tuple(still)
    inboxes: dict[str, list[Delivery]] = {}
    for d in resolved:
        if d.status == "delivered":
            inboxes.setdefault(d.recipient, []).append(d)
            w.info["delivered_messages"] += 1
        else:
            w.info["dropped_messages"] += 1
    w.inboxes = {
        r: tuple(sorted(lst, key=lambda d: (d.message.send_tick, d.message.sender,
                                            d.message.seq)))
        for r, lst in inboxes.items()
    }
    w.delivery_log = tuple(resolved)  # kept for tests and telemetry


def _clone(world: WorldState) -> WorldState:
    w = WorldState(config=world.config)
    w.tick = world.tick
    w.entities = dict(world.entities)
    w.weather = world.weather
    w.active_events = world.active_events
    w.lane_blocks = dict(world.lane_blocks)
    w.signal_phase_override = dict(world.signal_phase_override)
    w.signal_active = dict(world.signal_active)
    w.preempted = dict(world.preempted)
    w.pending_msgs = world.pending_msgs
    w.msg_seq = dict(world.msg_seq)
    w.inboxes = {}
    w.last_positions = dict(world.last_positions)
    w.event_entities = dict(world.event_entities)
    w.spawned_total = world.spawned_total
    w.despawned_total = world.despawned_total
    w.info = dict(world.info)
    return w


def step(world: WorldState, actions: dict | None = None) -> WorldState:
    """Advance one tick; the input world is left untouched."""
    actions = dict(actions or {})
    validate_actions(world, actions)
    w = _clone(world)
    w.tick = world.tick + 1
    w.info = _fresh_info()
    _phase_events(w, w.tick)
    _phase_spawn(w, w.tick)
    for eid, act in actions.items():
        if eid in w.config.network.intersections:
            w.signal_phase_override[eid] = int(act["phase_index"])
    _phase_signals(w, w.tick)
    occ = _lane_occupancy(w)
    incoming_map = _intersection_of_lane(w.config.network)
    plans = _phase_policies(w, occ, incoming_map)
    _apply_actions(w, actions, plans)
    if w.config.subsystems.get("air", True) is False:
        for eid in list(plans):
            if eid in w.entities and w.entities[eid].is_air:
                plans[eid] = _Plan(air_cmd=AirCommand((0.0, 0.0, 0.0)))
    _integrate(w, plans)
    if w.config.subsystems.get("comms", True):
        _phase_comms(w)
    for eid, e in w.entities.items():
        w.last_positions[eid] = _pos3(e)
    w.info["separation_violations"] = len(_current_separations(w))
    return w


# -- observation --------------------------------------------------------------


def _intersection_center(network, inter) -> tuple[float, float]:
    pts = []
    for lid in inter.incoming:
        pts.append(network.lanes[lid].centerline[-1])
    for lid in inter.outgoing:
        pts.append(network.lanes[lid].centerline[0])
    if not pts:
        return (0.0, 0.0)
    return (sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts))


def observe(world: WorldState, entity_id: str, perception_range: float) -> Observation:
    e = world.entities.get(entity_id)
    if e is None:
        raise UnknownEntity(entity_id)
    p0 = _pos3(e)
    ranked = []
    for oid in sorted(world.entities):
        if oid == entity_id:
            continue
        d = dist3(p0, _pos3(world.entities[oid]))
        if d <= perception_range:
            ranked.append((d, oid))
    ranked.sort()
    signal_view = None
    signal_inter = None
    if not e.is_air:
        best = None
        for iid in sorted(world.signal_active):
            inter = world.network.intersections[iid]
            cx, cy = _intersection_center(world.network, inter)
            d = math.hypot(p0[0] - cx, p0[1] - cy)
            if best is None or d < best[0]:
                best = (d, iid)
        if best is not None:
            signal_inter = best[1]
            signal_view = world.signal_active[best[1]]
    return Observation(
        ego=e,
        neighbors=tuple(world.entities[oid] for _d, oid in ranked),
        signal_view=signal_view, signal_intersection=signal_inter,
        inbox=world.inboxes.get(entity_id, ()),
        weather_tag=f"{world.weather.condition}/{world.weather.time_of_day}",
        tick=world.tick,
    )


def send(world: WorldState, sender: str, recipients, payload: bytes) -> str:
    """Enqueue a message between steps; it counts as sent on the next tick."""
    if sender not in world.entities:
        from .errors import UnknownSender
        raise UnknownSender(sender)
    seq = world.msg_seq.get(sender, 0)
    m = make_message(sender, recipients, payload, world.tick + 1, seq,
                     world.config.comms, True)
    world.msg_seq[sender] = seq + 1
    world.pending_msgs = world.pending_msgs + (m,)
    return m.msg_id


# -- trace and snapshots ------------------------------------------------------


def trace_record(world: WorldState) -> dict:
    ents = {}
    for eid in sorted(world.entities):
        e = world.entities[eid]
        ents[eid] = {
            "cls": e.cls, "control": e.control, "pose": e.pose.to_list(),
            "speed": e.speed, "velocity": list(e.velocity),
            "lane": list(e.lane_ref) if e.lane_ref else None,
            "priority": e.priority,
        }
    return {
        "tick": world.tick,
        "entities": ents,
        "events": sorted(world.active_events),
        "signals": {i: list(world.signal_active[i]) for i in sorted(world.signal_active)},
        "weather": world.weather.to_dict(),
        "delivered": world.info.get("delivered_messages", 0),
        "info": {k: world.info[k] for k in sorted(world.info)},
    }


def record_line(record: dict) -> bytes:
    return (json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def trace_hash(data: bytes) -> str:
    return f"{rng.fnv1a64(data):016x}"


def snapshot(world: WorldState) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "seed": world.config.seed,
        "tick": world.tick,
        "entities": [world.entities[eid].to_dict() for eid in sorted(world.entities)],
        "weather": world.weather.to_dict(),
        "active_events": sorted(world.active_events),
        "lane_blocks": {lid: [list(iv) for iv in ivs]
                        for lid, ivs in sorted(world.lane_blocks.items())},
        "signal_phase_override": dict(sorted(world.signal_phase_override.items())),
        "signal_active": {i: list(v) for i, v in sorted(world.signal_active.items())},
        "preempted": dict(sorted(world.preempted.items())),
        "pending_msgs": [m.to_dict() for m in world.pending_msgs],
        "msg_seq": dict(sorted(world.msg_seq.items())),
        "last_positions": {k: list(v) for k, v in sorted(world.last_positions.items())},
        "event_entities": {k: list(v) for k, v in sorted(world.event_entities.items())},
        "spawned_total": world.spawned_total,
        "despawned_total": world.despawned_total,
        "info": {k: world.info[k] for k in sorted(world.info)},
    }


def restore(snap: dict, config: ScenarioConfig) -> WorldState:
    if snap.get("version") != SNAPSHOT_VERSION:
        raise VersionMismatch(f"expected {SNAPSHOT_VERSION}, got {snap.get('version')}")
    w = WorldState(config=config)
    w.tick = int(snap["tick"])
    w.entities = {d["id"]: EntityState.from_dict(d) for d in snap["entities"]}
    w.weather = WeatherState.from_dict(snap["weather"])
    w.active_events = frozenset(snap["active_events"])
    w.lane_blocks = {lid: tuple(tuple(iv) for iv in ivs)
                     for lid, ivs in snap["lane_blocks"].items()}
    w.signal_phase_override = dict(snap["signal_phase_override"])
    w.signal_active = {i: tuple(v) for i, v in snap["signal_active"].items()}
    w.preempted = dict(snap["preempted"])
    w.pending_msgs = tuple(Message.from_dict(d) for d in snap["pending_msgs"])
    w.msg_seq = dict(snap["msg_seq"])
    w.last_positions = {k: tuple(v) for k, v in snap["last_positions"].items()}
    w.event_entities = {k: tuple(v) for k, v in snap["event_entities"].items()}
    w.spawned_total = int(snap["spawned_total"])
    w.despawned_total = int(snap["despawned_total"])
    w.info = dict(snap["info"])
    return w


def world_hash(world: WorldState) -> str:
    return trace_hash(record_line(snapshot(world)))
