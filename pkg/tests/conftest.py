import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crushflow.field import Params

settings.register_profile(
    "crushflow", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("crushflow")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def params():
    return Params()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
