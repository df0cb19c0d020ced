import io
import sys
import threading
import time

import numpy as np
import pytest

from skyground_client import (
    ClientConfig,
    ConnectionLost,
    ProtocolVersionMismatch,
    ServerFault,
    SimClient,
    Timeout,
    encode_observation,
)


def script(i):
    """Deterministic bang-bang driving profile."""
    return [1.0 if i % 10 < 5 else -1.0, 0]


class TestConfig:
    def test_timeout_must_be_positive(self):
        with pytest.raises(ValueError):
            ClientConfig(scenario="x.json", timeout=0.0)

    def test_unknown_transport(self):
        with pytest.raises(ValueError):
            ClientConfig(scenario="x.json", transport="carrier-pigeon")


class TestEpisode:
    def test_fifty_step_round_trip(self, scenario_path):
        cfg = ClientConfig(scenario=scenario_path, agent="ego", seed=17)
        with SimClient(cfg) as client:
            obs = client.reset()
            assert obs.shape == (client.observation_width,)
            steps = 0
            for i in range(50):
                obs, reward, done, info = client.step(script(i))
                steps += 1
                assert isinstance(reward, float)
                assert info["tick"] == steps
                if done:
                    break
            assert steps == 50
            # decoded arrays match the raw protocol transcript field-for-field
            step_responses = [resp for req, resp in client.transcript
                              if req.get("op") == "step"]
            assert len(step_responses) == steps
            last_raw = step_responses[-1]["observations"]["ego"]
            again = encode_observation(last_raw, cfg.k_neighbors)
            assert np.array_equal(obs, again)
            assert obs[4] == last_raw["ego"]["speed"]
            assert obs[:4].tolist() == last_raw["ego"]["pose"]

    def test_two_clients_identical_arrays(self, scenario_path):
        def run():
            cfg = ClientConfig(scenario=scenario_path, agent="ego", seed=17)
            with SimClient(cfg) as client:
                out = [client.reset()]
                for i in range(20):
                    obs, _r, done, _info = client.step(script(i))
                    out.append(obs)
                    if done:
                        break
                return out

        a, b = run(), run()
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_multi_agent_view_is_dict(self, scenario_path):
        with SimClient(ClientConfig(scenario=scenario_path)) as client:
            obs = client.reset()
            assert set(obs) == {"ego"}
            out, rewards, done, info = client.step({"ego": [0.5, 0]})
            assert isinstance(rewards, dict) and "ego" in rewards
            assert info["clipped"] == {"ego": False}

    def test_clip_flag_surfaces_in_info(self, scenario_path):
        cfg = ClientConfig(scenario=scenario_path, agent="ego")
        with SimClient(cfg) as client:
            client.reset()
            _obs, _r, _done, info = client.step([99.0, 0])
            assert info["clipped"]["ego"] is True

    def test_server_fault_on_bad_scenario(self):
        cfg = ClientConfig(scenario="/nonexistent/episode.json")
        with SimClient(cfg) as client:
            with pytest.raises(ServerFault):
                client.reset()


class TestTcpTransport:
    def test_matches_subprocess_episode(self, scenario_path):
        from skyground.env import serve_tcp

        ready = io.StringIO()
        t = threading.Thread(target=serve_tcp, args=(0,),
                             kwargs={"max_sessions": 1, "ready_file": ready},
                             daemon=True)
        t.start()
        while not ready.getvalue():
            time.sleep(0.01)
        port = int(ready.getvalue().strip())

        def run(cfg):
            with SimClient(cfg) as client:
                out = [client.reset()]
                for i in range(15):
                    obs, _r, _done, _info = client.step(script(i))
                    out.append(obs)
                return out

        via_tcp = run(ClientConfig(scenario=scenario_path, agent="ego",
                                   transport="tcp", port=port))
        t.join(timeout=5)
        via_stdio = run(ClientConfig(scenario=scenario_path, agent="ego"))
        for x, y in zip(via_tcp, via_stdio):
            assert np.array_equal(x, y)

    def test_connect_refused(self):
        with pytest.raises(ConnectionLost):
            SimClient(ClientConfig(scenario="x.json", transport="tcp",
                                   port=1, timeout=1.0))


FAKE_OLD_SERVER = (sys.executable, "-c", (
    "import sys\n"
    "for line in sys.stdin:\n"
    "    print('{\"ok\":true,\"protocol\":\"tsh/0\"}', flush=True)\n"))

SILENT_SERVER = (sys.executable, "-c",
                 "import time\nimport sys\nsys.stdin.readline()\ntime.sleep(30)\n")

DEAD_SERVER = (sys.executable, "-c", "pass")


class TestTransportFailures:
    def test_protocol_version_mismatch(self):
        with pytest.raises(ProtocolVersionMismatch):
            SimClient(ClientConfig(scenario="x.json",
                                   server_cmd=FAKE_OLD_SERVER))

    def test_timeout(self):
        with pytest.raises(Timeout):
            SimClient(ClientConfig(scenario="x.json", timeout=0.3,
                                   server_cmd=SILENT_SERVER))

    def test_server_exit_detected(self):
        with pytest.raises(ConnectionLost):
            SimClient(ClientConfig(scenario="x.json", timeout=2.0,
                                   server_cmd=DEAD_SERVER))
