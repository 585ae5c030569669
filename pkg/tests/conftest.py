from pathlib import Path

import pytest

from sketchnav.constraints import SemanticMap
from sketchnav.service.scenario import Scenario
from sketchnav.world import World

DATA = Path(__file__).resolve().parents[1] / "src" / "sketchnav" / "data"

# acceptance tests append one "criterion: PASS/FAIL" line each; printed in the
# terminal summary so the verdicts survive pytest's stdout capture
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def world() -> World:
    return World.load(DATA / "worlds" / "living_room.json")


@pytest.fixture(scope="session")
def smap() -> SemanticMap:
    return SemanticMap.load(DATA / "semantic_maps" / "living_room.json")


@pytest.fixture(scope="session")
def static_scenario() -> Scenario:
    return Scenario.load(DATA / "scenarios" / "static.json")


@pytest.fixture(scope="session")
def pedestrian_scenario() -> Scenario:
    return Scenario.load(DATA / "scenarios" / "pedestrian.json")


@pytest.fixture
def accept_line():
    def _record(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
