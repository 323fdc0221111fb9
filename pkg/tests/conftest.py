import numpy as np
import pytest

from swiftnav.world import Bounds, Obstacle, World


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow-suite acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long training runs (enable with --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow suite; pass --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


BIG = Bounds(-100.0, -100.0, 100.0, 100.0)


def make_world(obstacles=(), bounds=BIG, start=(0.0, 0.0), goal=(50.0, 0.0)):
    return World(bounds, [Obstacle(*o) for o in obstacles], start, goal)


@pytest.fixture
def empty_world():
    return make_world()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
