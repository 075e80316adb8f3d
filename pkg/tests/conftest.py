import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def interval_structures():
    from qeflow.solver import solve_qe_profile

    return [solve_qe_profile(3, 2, -2.0, r_max=1.0, target="interval", f2_0=0.5, npts=k, order=4)
            for k in (101, 201, 401)]


@pytest.fixture(scope="session")
def interval_qe(interval_structures):
    return interval_structures[-1]


def pytest_terminal_summary(terminalreporter):
    from _acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(LINES):
            terminalreporter.write_line(LINES[k])
