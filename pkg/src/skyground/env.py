"""Episodic control interface and its newline-delimited wire protocol.

One Env owns one world.  The protocol ("tsh/1") carries UTF-8 JSON
objects, one per line, strictly request/response; binary frame payloads
travel base64-encoded inside render responses.
"""
from __future__ import annotations

import base64
import json
import socket
import socketserver
import sys

from .config import ScenarioConfig, config_from_dict, load_config
from .errors import (
    ConfigInvalid,
    ProtocolError,
    SkygroundError,
    UnknownCamera,
)
from .events import canonical_json
from .render import export_frame, render  # noqa: F401  (export used by cli)
from .world import (
    WorldState,
    observe,
    record_line,
    reset_world,
    restore,
    snapshot,
    step,
    trace_hash,
    trace_record,
)

PROTOCOL_VERSION = "tsh/1"


class Env:
    """Reset/step contract over one scenario; multi-agent by default."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.world: WorldState | None = None
        self.trace_chunks: list[bytes] = []
        self._had_controllables = False

    # -- episodic API ---------------------------------------------------------

    def reset(self) -> dict:
        self.world = reset_world(self.config)
        self.trace_chunks = [record_line(trace_record(self.world))]
        self._had_controllables = bool(self.world.controllable_ids())
        return self._observations()

    def step(self, actions: dict | None = None) -> dict:
        if self.world is None:
            raise SkygroundError("step before reset")
        self.world = step(self.world, actions or {})
        self.trace_chunks.append(record_line(trace_record(self.world)))
        obs = self._observations()
        reward = self._reward()
        done = self.world.tick >= self.config.horizon
        if self._had_controllables and not self.world.controllable_ids():
            done = True
        return {
            "observations": obs,
            "rewards": {eid: reward for eid in obs},
            "done": done,
            "info": {k: self.world.info[k] for k in sorted(self.world.info)},
            "tick": self.world.tick,
        }

    def render_camera(self, camera_id: str, modalities=None):
        cam = self.config.camera(camera_id)
        if cam is None:
            raise UnknownCamera(camera_id)
        if modalities:
            from dataclasses import replace
            cam = replace(cam, modalities=tuple(modalities))
        return render(cam, self.world)

    def trace_bytes(self) -> bytes:
        return b"".join(self.trace_chunks)

    def trace_hash(self) -> str:
        return trace_hash(self.trace_bytes())

    def _observations(self) -> dict:
        out = {}
        for eid in self.world.controllable_ids():
            out[eid] = observe(self.world, eid, self.config.perception_range).to_dict()
        return out

    def _reward(self) -> float:
        name = self.config.reward.get("name", "zero")
        if name == "zero":
            return 0.0
        if name == "throughput":
            return float(self.world.info.get("despawned", 0))
        if name == "negative_mean_delay":
            delays = []
            for e in self.world.entities.values():
                if e.is_ground_vehicle and e.lane_ref:
                    limit = self.config.network.lanes[e.lane_ref[0]].speed_limit
                    delays.append(max(0.0, 1.0 - e.speed / limit))
            return -sum(delays) / len(delays) if delays else 0.0
        return 0.0


# -- wire protocol ------------------------------------------------------------


def _frame_payload(frame) -> dict:
    out = {
        "camera_id": frame.camera_id, "tick": frame.tick,
        "pose": frame.camera_pose.to_list(),
        "width": frame.width, "height": frame.height,
    }
    if frame.rgb is not None:
        out["rgb_b64"] = base64.b64encode(frame.rgb.tobytes()).decode("ascii")
    if frame.semantic is not None:
        out["semantic_b64"] = base64.b64encode(frame.semantic.tobytes()).decode("ascii")
    if frame.depth is not None:
        out["depth_b64"] = base64.b64encode(frame.depth.astype("<f4").tobytes()).decode("ascii")
    return out


class ProtocolSession:
    """Handles one request line at a time; the connection survives bad input."""

    def __init__(self):
        self.env: Env | None = None

    def handle_line(self, line: str) -> str:
        try:
            try:
                req = json.loads(line)
            except json.JSONDecodeError as e:
                raise ProtocolError(f"malformed request: {e}") from e
            if not isinstance(req, dict) or "op" not in req:
                raise ProtocolError("request must be an object with an 'op' field")
            payload = self._dispatch(req)
            return canonical_json({"ok": True, **payload})
        except SkygroundError as e:
            code = type(e).__name__
            if isinstance(e, ConfigInvalid):
                return canonical_json({"ok": False, "error": {
                    "code": code, "message": str(e),
                    "report": {"errors": e.report.errors, "warnings": e.report.warnings}}})
            return canonical_json({"ok": False, "error": {"code": code, "message": str(e)}})
        except Exception as e:  # defensive: a bug must not kill the session
            return canonical_json({"ok": False, "error": {
                "code": "InternalError", "message": f"{type(e).__name__}: {e}"}})

    def _dispatch(self, req: dict) -> dict:
        op = req["op"]
        if op == "hello":
            return {"protocol": PROTOCOL_VERSION}
        if op == "reset":
            if "config" in req:
                cfg = config_from_dict(req["config"], req.get("base_dir", "."),
                                       req.get("seed"))
            elif "path" in req:
                cfg = load_config(req["path"], req.get("seed"))
            elif self.env is not None:
                cfg = self.env.config
            else:
                raise ProtocolError("reset needs 'config' or 'path'")
            self.env = Env(cfg)
            obs = self.env.reset()
            return {"observations": obs, "done": False, "tick": 0}
        if self.env is None or self.env.world is None:
            if op in ("step", "render", "snapshot"):
                raise ProtocolError(f"{op} before reset")
        if op == "step":
            return self.env.step(req.get("actions", {}))
        if op == "render":
            cameras = req.get("cameras")
            if cameras is None:
                cameras = [req["camera"]] if "camera" in req \
                    else [c.id for c in self.env.config.cameras]
            frames = {}
            for cid in cameras:
                frames[cid] = _frame_payload(
                    self.env.render_camera(cid, req.get("modalities")))
            return {"frames": frames}
        if op == "snapshot":
            return {"snapshot": snapshot(self.env.world),
                    "hash": self.env.trace_hash()}
        if op == "close":
            return {"closed": True}
        raise ProtocolError(f"unknown op {op!r}")


def serve_stream(rfile, wfile) -> None:
    """Run the request/response loop over a pair of byte streams."""
    session = ProtocolSession()
    for raw in rfile:
        line = raw.decode("utf-8", errors="replace").strip()
        if not line:
            continue
        response = session.handle_line(line)
        wfile.write(response.encode("utf-8") + b"\n")
        wfile.flush()
        try:
            if json.loads(response).get("closed"):
                break
        except json.JSONDecodeError:
            pass


def serve_stdio() -> None:
    serve_stream(sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(port: int, host: str = "127.0.0.1", max_sessions: int | None = None,
              ready_file=None) -> None:
    """Sessions are handled sequentially; one world per session."""
    served = 0

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            serve_stream(self.rfile, self.wfile)

    class Server(socketserver.TCPServer):
        allow_reuse_address = True

    with Server((host, port), Handler) as server:
        actual_port = server.server_address[1]
        if ready_file is not None:
            ready_file.write(f"{actual_port}\n")
            ready_file.flush()
        while max_sessions is None or served < max_sessions:
            server.handle_request()
            served += 1


def connect_tcp(host: str, port: int, timeout: float = 10.0) -> socket.socket:
    return socket.create_connection((host, port), timeout=timeout)
