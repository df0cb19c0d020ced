import json
from pathlib import Path

import pytest

from skyground.config import config_from_dict
from skyground.map_core import load_network

REPO = Path(__file__).resolve().parent.parent
SCENARIOS = REPO / "scenarios"
MAPS = SCENARIOS / "maps"
GOLDENS = REPO / "goldens"


@pytest.fixture(scope="session")
def straight_net():
    return load_network(MAPS / "straight.json")


@pytest.fixture(scope="session")
def cross_net():
    return load_network(MAPS / "cross.json")


def load_scenario(name, **overrides):
    doc = json.loads((SCENARIOS / name).read_text())
    doc.update(overrides)
    return config_from_dict(doc, SCENARIOS)


def straight_scenario(**overrides):
    doc = {
        "map": "maps/straight.json",
        "seed": 1,
        "step_length": 0.1,
        "horizon": 100,
        "demand": {"flows": [], "trips": []},
    }
    doc.update(overrides)
    return config_from_dict(doc, SCENARIOS)


def cross_scenario(**overrides):
    doc = {
        "map": "maps/cross.json",
        "seed": 1,
        "step_length": 0.1,
        "horizon": 200,
        "demand": {"flows": [], "trips": []},
    }
    doc.update(overrides)
    return config_from_dict(doc, SCENARIOS)
