import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rcphase.dmc import Channel, bsc, z_channel

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def zch():
    return z_channel()


@pytest.fixture(scope="session")
def bsc01():
    return bsc(0.1)


@pytest.fixture(scope="session")
def ternary():
    rng = np.random.default_rng(11)
    return Channel(rng.dirichlet(np.ones(3), 3), [0.2, 0.3, 0.5])


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    def record(number, ok, detail):
        line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
