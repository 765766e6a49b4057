import logging

import numpy as np
import pytest

from evacnet.geometry import Circle, Exit, Scenario, SegmentChain, load_scenario
from evacnet.physics import PhysicsParams


@pytest.fixture(autouse=True)
def _quiet_physics_logs():
    # random fuzz states sometimes start inside a body; keep the output readable
    logging.getLogger("evacnet.physics").setLevel(logging.ERROR)
    yield
    logging.getLogger("evacnet.physics").setLevel(logging.NOTSET)


@pytest.fixture
def phys():
    return PhysicsParams()


@pytest.fixture
def one_exit():
    return load_scenario("one_exit.json")


@pytest.fixture
def one_exit_wide():
    return load_scenario("one_exit_wide.json")


@pytest.fixture
def empty_room():
    """10x10 room whose only exit is a 1 m door at the top center."""
    return Scenario((10.0, 10.0), (Exit((5.0, 10.0), 1.0),), (), "empty")


@pytest.fixture
def circle_room():
    return Scenario((10.0, 10.0), (Exit((5.0, 10.0), 1.0),), (Circle((5.0, 5.0), 2.0),), "circle")


@pytest.fixture
def chain_room():
    cup = SegmentChain(((3.5, 5.0), (3.5, 7.0), (6.5, 7.0), (6.5, 5.0)), 0.2)
    return Scenario((10.0, 10.0), (Exit((5.0, 10.0), 1.0),), (cup,), "cup")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance reporting: each criterion records one PASS/FAIL line, echoed at
# the end of the run so the lines survive output capturing

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
