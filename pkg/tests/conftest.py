import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

# jit compilation makes first calls slow on one CPU
settings.register_profile("default", deadline=None)
settings.load_profile("default")

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    log = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        log.append((number, title, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(ACCEPTANCE_KEY, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(log):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
