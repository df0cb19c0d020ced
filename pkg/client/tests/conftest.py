import json

import pytest

SCENARIO = {
    "map": {"lanes": [
        {"id": "a", "centerline": [[0, 0], [400, 0]], "width": 3.5,
         "speed_limit": 13.9},
    ]},
    "seed": 17,
    "step_length": 0.1,
    "horizon": 120,
    "demand": {
        "flows": [{"id": "bg", "route": ["a"], "rate": 1.0}],
        "trips": [{"id": "ego", "route": ["a"], "start_s": 40.0,
                   "speed": 6.0}],
    },
    "controllables": ["ego"],
    "comms": {"latency": 1},
}


@pytest.fixture(scope="session")
def scenario_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("scn") / "episode.json"
    path.write_text(json.dumps(SCENARIO))
    return str(path)
