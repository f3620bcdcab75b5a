import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sqfn.geometry import GeometrySpec, generate
from sqfn.kernels import kernel_by_name

settings.register_profile("sqfn", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sqfn")

# filled by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grad_riesz():
    return kernel_by_name("riesz-grad", 2)


@pytest.fixture(scope="session")
def line2048():
    return generate(GeometrySpec("line", {}, 2048))


@pytest.fixture(scope="session")
def sawtooth2048():
    return generate(GeometrySpec("lipschitz_graph", {"profile": "sawtooth", "label_branches": True},
                                 2048))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tmp_out(tmp_path):
    return str(tmp_path)
