"""Blocking request/response client for the "tsh/1" simulation protocol.

The default transport spawns the server as a subprocess and talks over
its stdio; a TCP transport connects to an already-running server.  One
client drives one episode at a time and keeps no state beyond the
connection and the class of each controllable entity (needed to pick the
right action schema).
"""
from __future__ import annotations

import json
import select
import socket
import subprocess
import sys
from dataclasses import dataclass, field

import numpy as np

from .encoding import (
    ActionBounds,
    decode_action,  # noqa: F401  (re-exported for transcript tooling)
    encode_action,
    encode_observation,
    feature_width,
)
from .errors import (
    ActionOutOfSchema,
    ConnectionLost,
    ProtocolVersionMismatch,
    ServerFault,
    Timeout,
)

EXPECTED_PROTOCOL = "tsh/1"
DEFAULT_SERVER_CMD = (sys.executable, "-m", "skyground.cli", "serve", "--stdio")


@dataclass(frozen=True)
class ClientConfig:
    scenario: str
    transport: str = "subprocess"       # subprocess | tcp
    host: str = "127.0.0.1"
    port: int = 7781
    agent: str = "all"                  # one entity id, or "all" for dict views
    k_neighbors: int = 8
    seed: int | None = None
    timeout: float = 10.0
    server_cmd: tuple[str, ...] = DEFAULT_SERVER_CMD
    bounds: ActionBounds = field(default_factory=ActionBounds)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.transport not in ("subprocess", "tcp"):
            raise ValueError(f"unknown transport {self.transport}")


class _SubprocessTransport:
    def __init__(self, cmd, timeout: float):
        self.timeout = timeout
        self.proc = subprocess.Popen(cmd, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE)

    def request(self, line: str) -> str:
        if self.proc.poll() is not None:
            raise ConnectionLost("server process exited")
        try:
            self.proc.stdin.write(line.encode("utf-8") + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ConnectionLost(str(e)) from e
        ready, _, _ = select.select([self.proc.stdout], [], [], self.timeout)
        if not ready:
            raise Timeout(f"no response within {self.timeout}s")
        out = self.proc.stdout.readline()
        if not out:
            raise ConnectionLost("server closed stdout")
        return out.decode("utf-8")

    def close(self):
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise ConnectionLost(f"connect failed: {e}") from e
        self.sock.settimeout(timeout)
        self.fh = self.sock.makefile("rwb")

    def request(self, line: str) -> str:
        try:
            self.fh.write(line.encode("utf-8") + b"\n")
            self.fh.flush()
            out = self.fh.readline()
        except socket.timeout as e:
            raise Timeout(str(e)) from e
        except OSError as e:
            raise ConnectionLost(str(e)) from e
        if not out:
            raise ConnectionLost("server closed connection")
        return out.decode("utf-8")

    def close(self):
        try:
            self.fh.close()
            self.sock.close()
        except OSError:
            pass


class SimClient:
    """Episodic reset/step/close over one server connection."""

    def __init__(self, config: ClientConfig):
        self.config = config
        if config.transport == "subprocess":
            self.transport = _SubprocessTransport(config.server_cmd,
                                                  config.timeout)
        else:
            self.transport = _TcpTransport(config.host, config.port,
                                           config.timeout)
        self.transcript: list[tuple[dict, dict]] = []
        self._classes: dict[str, str] = {}
        hello = self._request({"op": "hello"})
        if hello.get("protocol") != EXPECTED_PROTOCOL:
            self.close()
            raise ProtocolVersionMismatch(
                f"server speaks {hello.get('protocol')!r}, "
                f"need {EXPECTED_PROTOCOL!r}")

    # -- plumbing -------------------------------------------------------------

    def _request(self, obj: dict) -> dict:
        raw = self.transport.request(json.dumps(obj))
        try:
            resp = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ConnectionLost(f"unparseable response: {e}") from e
        self.transcript.append((obj, resp))
        if not resp.get("ok"):
            err = resp.get("error", {})
            raise ServerFault(err.get("code", "Unknown"),
                              err.get("message", ""))
        return resp

    def _encode_all(self, observations: dict) -> dict[str, np.ndarray]:
        self._classes = {eid: obs["ego"]["cls"]
                         for eid, obs in observations.items()}
        return {eid: encode_observation(obs, self.config.k_neighbors)
                for eid, obs in sorted(observations.items())}

    def _view(self, encoded: dict[str, np.ndarray]):
        if self.config.agent == "all":
            return encoded
        return encoded.get(self.config.agent)

    @property
    def observation_width(self) -> int:
        return feature_width(self.config.k_neighbors)

    # -- episodic API ---------------------------------------------------------

    def reset(self):
        req = {"op": "reset", "path": self.config.scenario}
        if self.config.seed is not None:
            req["seed"] = self.config.seed
        resp = self._request(req)
        return self._view(self._encode_all(resp["observations"]))

    def step(self, actions=None):
        encoded_actions = {}
        clipped = {}
        if actions is not None:
            if self.config.agent != "all":
                actions = {self.config.agent: actions}
            for eid, vec in actions.items():
                cls = self._classes.get(eid)
                if cls is None:
                    raise ActionOutOfSchema(f"no observed entity {eid}")
                encoded_actions[eid], clipped[eid] = encode_action(
                    vec, cls, self.config.bounds)
        resp = self._request({"op": "step", "actions": encoded_actions})
        obs = self._view(self._encode_all(resp["observations"]))
        rewards = resp["rewards"]
        if self.config.agent != "all":
            rewards = rewards.get(self.config.agent, 0.0)
        info = dict(resp["info"])
        info["clipped"] = clipped
        info["tick"] = resp["tick"]
        return obs, rewards, resp["done"], info

    def close(self):
        try:
            self._request({"op": "close"})
        except (ConnectionLost, Timeout, ServerFault):
            pass
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
