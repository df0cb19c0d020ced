"""Multi-modal camera rendering: RGB, semantic segmentation, and depth
from one ray cast per pixel against ground plane + box primitives.

Depth is the perpendicular distance along the camera forward axis; pixels
whose ray hits nothing carry the sentinel far*2.  Only RGB reacts to
weather and lighting; depth and semantics are invariant by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .config import CameraSpec
from .entities import BASE_COLOR
from .errors import IoFailure, UnknownMountEntity
from .events import LIGHT_SCALARS
from .geometry import Pose

SEMANTIC_IDS = {
    "VOID": 0, "GROUND": 1, "ROAD": 2, "MARKING": 3, "BUILDING": 4,
    "CAR": 5, "BUS": 6, "TRUCK": 7, "EMERGENCY": 8, "PEDESTRIAN": 9,
    "UAV": 10, "UAM": 11, "BARRIER": 12, "WRECK": 13, "FALLEN_TREE": 14,
}

SEMANTIC_OF_CLASS = {
    "CAR": "CAR", "BUS": "BUS", "TRUCK": "TRUCK",
    "FIRE_TRUCK": "EMERGENCY", "POLICE_CAR": "EMERGENCY", "AMBULANCE": "EMERGENCY",
    "PEDESTRIAN": "PEDESTRIAN", "UAV": "UAV", "UAM": "UAM",
    "BARRIER": "BARRIER", "WRECK": "WRECK", "FALLEN_TREE": "FALLEN_TREE",
}

SURFACE_COLORS = {
    "GROUND": (110, 140, 90),
    "ROAD": (70, 70, 75),
    "MARKING": (230, 230, 230),
    "BUILDING": (150, 140, 130),
}
SKY_COLOR = (135, 206, 235)
RAIN_SPECKLE_COLOR = (210, 210, 215)


@dataclass(frozen=True)
class BoxPrimitive:
    prim_id: str
    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float
    semantic: int
    color: tuple[int, int, int]


@dataclass
class Frame:
    camera_id: str
    tick: int
    camera_pose: Pose
    width: int
    height: int
    rgb: np.ndarray | None = None        # (H, W, 3) uint8
    semantic: np.ndarray | None = None   # (H, W) uint8
    depth: np.ndarray | None = None      # (H, W) float32
    hits: np.ndarray | None = None       # (H, W) int32 primitive index, -1 = none


def build_scene(world) -> list[BoxPrimitive]:
    """Box primitives for the current tick: buildings first, then entities."""
    prims: list[BoxPrimitive] = []
    for b in world.network.buildings:
        prims.append(BoxPrimitive(
            prim_id=f"bldg:{b.id}",
            center=(b.center[0], b.center[1], b.height / 2.0),
            dims=(b.size[0], b.size[1], b.height),
            yaw=b.yaw, semantic=SEMANTIC_IDS["BUILDING"],
            color=SURFACE_COLORS["BUILDING"]))
    for eid in sorted(world.entities):
        e = world.entities[eid]
        sem = SEMANTIC_OF_CLASS[e.cls]
        # air entities are centered on their pose; ground ones sit on it
        cz = e.pose.z if e.is_air else e.pose.z + e.bbox[2] / 2.0
        prims.append(BoxPrimitive(
            prim_id=f"ent:{eid}",
            center=(e.pose.x, e.pose.y, cz),
            dims=e.bbox, yaw=e.pose.heading,
            semantic=SEMANTIC_IDS[sem], color=BASE_COLOR[e.cls]))
    return prims


def resolve_camera_pose(spec: CameraSpec, world) -> Pose:
    if spec.mount_type == "fixed":
        return Pose(*spec.mount_pose)
    e = world.entities.get(spec.mount_entity)
    if e is None:
        raise UnknownMountEntity(f"camera {spec.id}: entity {spec.mount_entity}")
    ox, oy, oz, oh = spec.mount_offset
    h = e.pose.heading
    ch, sh = math.cos(h), math.sin(h)
    return Pose(e.pose.x + ch * ox - sh * oy,
                e.pose.y + sh * ox + ch * oy,
                e.pose.z + oz, h + oh)


def project(pose: Pose, hfov: float, width: int, height: int, point,
            near: float = 0.0):
    """Pinhole projection of a world point; None when behind or off-frame."""
    ch, sh = math.cos(pose.heading), math.sin(pose.heading)
    dx, dy, dz = point[0] - pose.x, point[1] - pose.y, point[2] - pose.z
    x_c = ch * dx + sh * dy
    y_c = -sh * dx + ch * dy
    z_c = dz
    if x_c <= near or x_c <= 0.0:
        return None
    focal = (width / 2.0) / math.tan(hfov / 2.0)
    u = math.floor(width / 2.0 + focal * (-y_c / x_c))
    v = math.floor(height / 2.0 - focal * (z_c / x_c))
    if not (0 <= u < width and 0 <= v < height):
        return None
    return (u, v, x_c)


def camera_rays(pose: Pose, pitch: float, hfov: float, width: int, height: int):
    """Per-pixel world-frame ray directions with unit forward component.

    Returns (origin, dirs) where dirs has shape (H, W, 3); the parameter t
    along a ray equals the perpendicular depth.
    """
    focal = (width / 2.0) / math.tan(hfov / 2.0)
    u = np.arange(width, dtype=np.float64) + 0.5
    v = np.arange(height, dtype=np.float64) + 0.5
    yc = -(u - width / 2.0) / focal           # +y left
    zc = (height / 2.0 - v) / focal           # +z up
    dir_cam = np.empty((height, width, 3), dtype=np.float64)
    dir_cam[..., 0] = 1.0
    dir_cam[..., 1] = yc[None, :]
    dir_cam[..., 2] = zc[:, None]
    cp, sp = math.cos(pitch), math.sin(pitch)
    ch, sh = math.cos(pose.heading), math.sin(pose.heading)
    # pitch about camera +y (negative looks down), then heading about world z
    fx = cp * dir_cam[..., 0] - sp * dir_cam[..., 2]
    fz = sp * dir_cam[..., 0] + cp * dir_cam[..., 2]
    fy = dir_cam[..., 1]
    wx = ch * fx - sh * fy
    wy = sh * fx + ch * fy
    dirs = np.stack([wx, wy, fz], axis=-1)
    return np.array([pose.x, pose.y, pose.z], dtype=np.float64), dirs


def _slab_hit_np(origin, dirs, box: BoxPrimitive):
    """Vectorized slab test in the box's local frame; returns t or +inf."""
    cy, sy = math.cos(box.yaw), math.sin(box.yaw)
    ox = origin[0] - box.center[0]
    oy = origin[1] - box.center[1]
    oz = origin[2] - box.center[2]
    o_l = np.array([cy * ox + sy * oy, -sy * ox + cy * oy, oz])
    dxw, dyw, dzw = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    d_l = (cy * dxw + sy * dyw, -sy * dxw + cy * dyw, dzw)
    tn = np.full(dirs.shape[:2], -np.inf)
    tf = np.full(dirs.shape[:2], np.inf)
    for ax in range(3):
        half = box.dims[ax] / 2.0
        d = d_l[ax]
        o = o_l[ax]
        nonzero = d != 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(nonzero, (-half - o) / d, 0.0)
            t2 = np.where(nonzero, (half - o) / d, 0.0)
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        inside = abs(o) <= half
        lo = np.where(nonzero, lo, np.where(inside, -np.inf, np.inf))
        hi = np.where(nonzero, hi, np.where(inside, np.inf, -np.inf))
        tn = np.maximum(tn, lo)
        tf = np.minimum(tf, hi)
    return tn, tf


def slab_hit_scalar(origin, direction, box: BoxPrimitive,
                    near: float, far: float) -> float | None:
    """Pure-scalar slab test; the brute-force oracle's building block."""
    cy, sy = math.cos(box.yaw), math.sin(box.yaw)
    ox = origin[0] - box.center[0]
    oy = origin[1] - box.center[1]
    oz = origin[2] - box.center[2]
    o = (cy * ox + sy * oy, -sy * ox + cy * oy, oz)
    d = (cy * direction[0] + sy * direction[1],
         -sy * direction[0] + cy * direction[1], direction[2])
    tn, tf = -math.inf, math.inf
    for ax in range(3):
        half = box.dims[ax] / 2.0
        if d[ax] != 0.0:
            t1 = (-half - o[ax]) / d[ax]
            t2 = (half - o[ax]) / d[ax]
            lo, hi = (t1, t2) if t1 <= t2 else (t2, t1)
        elif abs(o[ax]) <= half:
            lo, hi = -math.inf, math.inf
        else:
            return None
        tn = max(tn, lo)
        tf = min(tf, hi)
    if tf < tn:
        return None
    t = tn if tn >= near else tf
    if t < near or t > far:
        return None
    return t


def classify_ground_point(network, x: float, y: float) -> str:
    """GROUND / ROAD / MARKING for a point on the z=0 plane."""
    marking = False
    road = False
    for lid in sorted(network.lanes):
        lane = network.lanes[lid]
        pts = lane.centerline
        best = math.inf
        for (ax, ay), (bx, by) in zip(pts, pts[1:]):
            vx, vy = bx - ax, by - ay
            L2 = vx * vx + vy * vy
            t = ((x - ax) * vx + (y - ay) * vy) / L2
            t = min(1.0, max(0.0, t))
            qx, qy = ax + t * vx, ay + t * vy
            best = min(best, math.hypot(x - qx, y - qy))
        if best <= 0.075:
            marking = True
        if best <= lane.width / 2.0:
            road = True
    if marking:
        return "MARKING"
    if road:
        return "ROAD"
    return "GROUND"


def render(spec: CameraSpec, world, with_hits: bool = False) -> Frame:
    """Cast one ray per pixel against every primitive; pure in the world."""
    pose = resolve_camera_pose(spec, world)
    H, W = spec.height, spec.width
    origin, dirs = camera_rays(pose, spec.pitch, spec.hfov, W, H)
    prims = build_scene(world)

    best_t = np.full((H, W), np.inf)
    best_idx = np.full((H, W), -1, dtype=np.int32)

    # primitive index 0 is the ground plane; boxes follow in scene order
    dz = dirs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dz != 0.0, -origin[2] / dz, np.inf)
    ok = (dz != 0.0) & (t_ground >= spec.near) & (t_ground <= spec.far)
    best_t = np.where(ok, t_ground, best_t)
    best_idx = np.where(ok, 0, best_idx)

    for i, box in enumerate(prims):
        tn, tf = _slab_hit_np(origin, dirs, box)
        t = np.where(tn >= spec.near, tn, tf)
        hit = (tf >= tn) & (t >= spec.near) & (t <= spec.far)
        closer = hit & (t < best_t)
        best_t = np.where(closer, t, best_t)
        best_idx = np.where(closer, i + 1, best_idx)

    frame = Frame(camera_id=spec.id, tick=world.tick, camera_pose=pose,
                  width=W, height=H)
    if with_hits:
        frame.hits = best_idx.copy()

    no_hit = best_idx < 0
    if "DEPTH" in spec.modalities:
        depth = np.where(no_hit, spec.far * 2.0, best_t)
        frame.depth = depth.astype(np.float32)

    need_sem = "SEMANTIC" in spec.modalities
    need_rgb = "RGB" in spec.modalities
    if need_sem or need_rgb:
        sem = np.zeros((H, W), dtype=np.uint8)
        rgb = np.zeros((H, W, 3), dtype=np.float64)
        rgb[...] = SKY_COLOR
        ground_px = best_idx == 0
        if ground_px.any():
            hx = origin[0] + best_t * dirs[..., 0]
            hy = origin[1] + best_t * dirs[..., 1]
            ys, xs = np.nonzero(ground_px)
            for r, c in zip(ys, xs):
                surf = classify_ground_point(world.network, hx[r, c], hy[r, c])
                sem[r, c] = SEMANTIC_IDS[surf]
                rgb[r, c] = SURFACE_COLORS[surf]
        for i, box in enumerate(prims):
            mask = best_idx == i + 1
            if mask.any():
                sem[mask] = box.semantic
                rgb[mask] = box.color
        if need_sem:
            frame.semantic = sem
        if need_rgb:
            frame.rgb = _shade_rgb(rgb, world, spec)
    return frame


def _shade_rgb(rgb: np.ndarray, world, spec: CameraSpec) -> np.ndarray:
    weather = world.weather
    scale = LIGHT_SCALARS[weather.time_of_day]
    out = rgb * scale
    if weather.condition == "RAIN" and weather.rain_intensity > 0.0:
        out *= 1.0 - 0.3 * weather.rain_intensity
        H, W = out.shape[:2]
        threshold = 0.02 * weather.rain_intensity
        base = world.tick * W * H
        for idx in range(W * H):
            if rng.uniform(world.config.seed, "sensor", spec.id, base + idx) < threshold:
                out[idx // W, idx % W] = RAIN_SPECKLE_COLOR
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# -- export -------------------------------------------------------------------


def export_frame(frame: Frame, directory) -> list[Path]:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        stem = f"{frame.camera_id}_{frame.tick}"
        if frame.rgb is not None:
            path = directory / f"{stem}_rgb.ppm"
            header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
            path.write_bytes(header + frame.rgb.tobytes())
            written.append(path)
        if frame.semantic is not None:
            path = directory / f"{stem}_semantic.pgm"
            header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
            path.write_bytes(header + frame.semantic.tobytes())
            written.append(path)
        if frame.depth is not None:
            path = directory / f"{stem}_depth.dpt"
            header = f"DPT {frame.width} {frame.height}\n".encode("ascii")
            path.write_bytes(header + frame.depth.astype("<f4").tobytes())
            written.append(path)
        return written
    except OSError as e:
        raise IoFailure(str(e)) from e


def read_depth(path) -> np.ndarray:
    """Re-import a .dpt file; bit-exact round trip of export_frame."""
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    tag, w, h = data[:nl].decode("ascii").split()
    if tag != "DPT":
        raise IoFailure(f"{path}: not a DPT file")
    w, h = int(w), int(h)
    return np.frombuffer(data[nl + 1:], dtype="<f4").reshape(h, w)
