import sys
from pathlib import Path

import pytest
from hypothesis import settings

from scenecluster.scene_model import Lane, LaneMap, default_lane_map

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def single_lane():
    return LaneMap({"A": Lane("A", [(0, 0), (100, 0)], 4.0)})


@pytest.fixture
def chain_map():
    return LaneMap({
        "A": Lane("A", [(0, 0), (100, 0)], 4.0, successors=["B"]),
        "B": Lane("B", [(100, 0), (200, 0)], 4.0),
    })


@pytest.fixture
def parallel_map():
    return LaneMap({
        "L": Lane("L", [(0, 3.5), (100, 3.5)], 3.5, right_adjacent="R"),
        "R": Lane("R", [(0, 0), (100, 0)], 3.5, left_adjacent="L"),
    })


@pytest.fixture
def crossing_map():
    # H runs east along y=0, V runs north along x=50; they cross at s=50 on both
    return LaneMap({
        "H": Lane("H", [(0, 0), (100, 0)], 4.0),
        "V": Lane("V", [(50, -50), (50, 50)], 4.0),
    })


@pytest.fixture(scope="session")
def synth_map():
    return default_lane_map()


# acceptance criteria report their verdicts here; printed after the run
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
