import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rodlim.cross_section import generate_disk, generate_rectangle  # noqa: E402
from rodlim.material import isotropic  # noqa: E402


@pytest.fixture(scope="session")
def disk2():
    return generate_disk(2)


@pytest.fixture(scope="session")
def disk1():
    return generate_disk(1)


@pytest.fixture(scope="session")
def square2():
    return generate_rectangle(1.0, 2)


@pytest.fixture(scope="session")
def iso11():
    return isotropic(1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
