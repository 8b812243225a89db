import numpy as np
import pytest

from socnav.dataset import generate_offline_dataset
from socnav.scenario import load_scenario

MINI_YAML = """
name: mini-room
obstacles:
  polygons:
    - [[-7.0, -5.2], [7.0, -5.2], [7.0, -5.0], [-7.0, -5.0]]
    - [[-7.0, 5.0], [7.0, 5.0], [7.0, 5.2], [-7.0, 5.2]]
    - [[-7.2, -5.2], [-7.0, -5.2], [-7.0, 5.2], [-7.2, 5.2]]
    - [[7.0, -5.2], [7.2, -5.2], [7.2, 5.2], [7.0, 5.2]]
course:
  loop: true
  spacing: 1.5
  waypoints: [[-5.0, -3.0], [5.0, -3.0], [5.0, 3.0], [-5.0, 3.0]]
pedestrians:
  - start: [4.0, 0.0]
    waypoints: [[4.0, 2.0], [4.0, -2.0]]
small_objects:
  count: 2
  radius: 0.12
  max_lateral_offset: 0.45
  min_node_clearance: 0.75
"""


@pytest.fixture(scope="session")
def mini_scenario(tmp_path_factory):
    p = tmp_path_factory.mktemp("scenario") / "mini.yaml"
    p.write_text(MINI_YAML)
    return load_scenario(p)


@pytest.fixture(scope="session")
def mini_dataset(mini_scenario):
    """Planner-expert transitions on the mini course, shared across tests."""
    return generate_offline_dataset(mini_scenario, 150, seed=9)


@pytest.fixture(scope="session")
def mini_scenario_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("scenario-file") / "mini.yaml"
    p.write_text(MINI_YAML)
    return p
