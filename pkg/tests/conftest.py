import sys
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ebnf.conjugate import NormalInverseGamma
from ebnf.simulate import ScenarioSpec, draw_conjugate, draw_scenario

settings.register_profile("default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", max_examples=10, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def nig():
    return NormalInverseGamma()


@pytest.fixture(scope="session")
def nig_sample(nig):
    return draw_conjugate(nig, 100, seed=1)


@pytest.fixture(scope="session")
def s1_sample():
    return draw_scenario(ScenarioSpec("S1", 4.0, 200, 10, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    # PASS/FAIL lines recorded by test_acceptance.verdict
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
