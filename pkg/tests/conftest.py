import sys

import numpy as np
import pytest

from causet_qft.causet import choose_preferred_past
from causet_qft.generators import LatticeSpec, diamond_lattice
from causet_qft.operators import build_plambda, build_sorkin, greens
from causet_qft.quantization import sj_two_point


def plambda_greens(cs):
    return greens(build_plambda(cs, choose_preferred_past(cs)))


@pytest.fixture(scope="session")
def lattice4():
    return diamond_lattice(LatticeSpec(4, 4, complete_past=True))


@pytest.fixture(scope="session")
def small_greens():
    """P_Lambda Green functions on a 2x3 lattice (N = 6)."""
    return plambda_greens(diamond_lattice(LatticeSpec(2, 3)))


@pytest.fixture(scope="session")
def small_two_point(small_greens):
    return sj_two_point(small_greens)


@pytest.fixture(scope="session")
def mid_greens():
    """P_Lambda Green functions on a 4x4 lattice (N = 16)."""
    return plambda_greens(diamond_lattice(LatticeSpec(4, 4)))


@pytest.fixture(scope="session")
def sorkin_greens():
    return greens(build_sorkin(diamond_lattice(LatticeSpec(4, 4)), 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
