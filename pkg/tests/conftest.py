import numpy as np
import pytest
from hypothesis import settings

from adiabound.models import constant_model, search_model

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def search4():
    return search_model(4)


@pytest.fixture(scope="session")
def flat():
    return constant_model(np.diag([0.0, 1.0]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
