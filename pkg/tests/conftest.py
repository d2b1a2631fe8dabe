import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CRITERION_LINES: dict[int, str] = {}


def record_criterion(result) -> None:
    CRITERION_LINES[result.number] = result.line()
    print(result.line())


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERION_LINES):
            terminalreporter.write_line(CRITERION_LINES[n])


@pytest.fixture(scope="session")
def pendulum_run():
    from frt_reach.experiments import pendulum_pipeline
    return pendulum_pipeline()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
