import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("amolab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("amolab")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)


def pytest_configure(config):
    config.amolab_acceptance = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "amolab_acceptance", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
