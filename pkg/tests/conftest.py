import json

import numpy as np
import pytest

from roomverb.config import Settings
from roomverb.geometry import Plane


def box_planes(dims, origin=(0.0, 0.0, 0.0), yaw=0.0, confidence=1.0):
    """The six exact bounding planes of a cuboid rotated by ``yaw`` about z."""
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    lo = np.asarray(origin, dtype=float)
    hi = lo + np.asarray(dims, dtype=float)
    planes = []
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        n = rot @ e
        planes.append(Plane(-n, -lo[axis], (2.0, 2.0), confidence))
        planes.append(Plane(n, hi[axis], (2.0, 2.0), confidence))
    return planes


SCENE = {
    "format_version": 1,
    "scene_id": "lounge",
    "scene_type": "living_room",
    "room": {"dimensions": [6.0, 5.0, 3.0]},
    "materials": {"z_min": "carpet", "x_max": "glass", "z_max": "acoustic_tile", "y_min": "plaster_drywall"},
    "listener": {"position": [2.0, 2.0, 1.6]},
    "sources": [{"id": "talker", "position": [4.5, 3.0, 1.5]}],
}


@pytest.fixture
def scene_dict():
    return json.loads(json.dumps(SCENE))


@pytest.fixture
def scene_file(tmp_path, scene_dict):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(scene_dict))
    return path


@pytest.fixture
def settings():
    return Settings()


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance(request):
    """Record one acceptance line: ``acceptance("A1", passed, detail)``."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(criterion, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        lines[criterion] = f"{criterion} {status}  {detail}".rstrip()
        print(lines[criterion])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: (len(k), k)):
            terminalreporter.write_line(lines[key])
