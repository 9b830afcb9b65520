import functools

import pytest
from hypothesis import settings

from cpsflow.fixtures import load_fixture
from cpsflow.reach import reach

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def scenario(name: str):
    return load_fixture(name)


@functools.lru_cache(maxsize=None)
def auto_reach(fixture: str, attacker: str):
    """Loop-closed reach result for one built-in attacker, shared across tests."""
    sc = scenario(fixture)
    return reach(sc.model, sc.attackers[attacker], sc.sigma0, "auto")


@pytest.fixture(scope="session")
def two_tank():
    return scenario("two-tank-v1")


@pytest.fixture(scope="session")
def two_tank_fair():
    return scenario("two-tank-fair")


@pytest.fixture(scope="session")
def single_tank():
    return scenario("single-tank")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
