import math

import numpy as np
import pytest

from capwaves.flows import VorticitySpec
from capwaves.problem import Problem
from capwaves.spectral import GridSpec

G, SIGMA = 9.81, 0.074

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def make_problem(vort="constant:0", N=16, M=40, L=2 * math.pi, h=1.0, g=G, sigma=SIGMA) -> Problem:
    return Problem(GridSpec(L, h, N, M), VorticitySpec.parse(vort), g, sigma)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    return GridSpec(2 * math.pi, 1.0, 16, 40)


@pytest.fixture(params=["constant:0", "constant:2", "affine:-2,1"])
def small_problem(request):
    return make_problem(request.param)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
