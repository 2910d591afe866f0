import os

import numpy as np
import pytest
from hypothesis import settings

from geoedit import Circle, Parabola, Schedule, make_curve_tube

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

# acceptance lines, printed once at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def schedule():
    return Schedule()


@pytest.fixture(scope="session")
def parabola():
    return Parabola(1.0, half_width=0.5)


@pytest.fixture(scope="session")
def parabola_field(parabola, schedule):
    return make_curve_tube(parabola, 64, 0.05, schedule)


@pytest.fixture(scope="session")
def circle():
    return Circle(1.0)


@pytest.fixture(scope="session")
def circle_field(circle, schedule):
    return make_curve_tube(circle, 256, 0.05, schedule)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
