import os

import pytest
from hypothesis import HealthCheck, settings

from goldilocks import PATIENT_A_X0, patient_a, patient_a_pkpd

settings.register_profile(
    "repo", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

SEED = int(os.environ.get("GOLDILOCKS_TEST_SEED", "20240611"))


@pytest.fixture
def mp():
    return patient_a()


@pytest.fixture
def pk():
    return patient_a_pkpd()


@pytest.fixture
def x0():
    return PATIENT_A_X0


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(SEED)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
