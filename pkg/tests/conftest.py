import numpy as np
import pytest

from spiderwalk.env import Environment, EnvironmentSpec
from spiderwalk.spider import validate_L


@pytest.fixture
def rope2():
    return validate_L([(0, 1), (0, 2)])


@pytest.fixture
def single():
    return validate_L([(0,)])


@pytest.fixture
def fig1():
    return validate_L([(0, 1, 2), (0, 1, 3), (0, 2, 3), (0, 2, 4)])


@pytest.fixture
def ballistic_spec():
    return EnvironmentSpec.uniform([0.9, 0.45], 0.1)


@pytest.fixture
def sub_spec():
    return EnvironmentSpec.uniform([0.8, 0.4], 0.1)


def flat_env(p=0.5):
    """Every site has right-jump probability ``p`` (no overrides needed)."""
    spec = EnvironmentSpec(((1.0, p),), min(p, 1 - p), require_nestling=False)
    return Environment(spec, 0)


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
