import numpy as np
import pytest
from hypothesis import settings

from toolforge.assets import sample_tool
from toolforge.robot import default_model, planar_two_link
from toolforge.seeding import derive_rng

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def planar():
    return planar_two_link()


@pytest.fixture(scope="session")
def tool():
    return sample_tool(derive_rng(3, "tool", 0), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
