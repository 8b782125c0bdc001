import numpy as np
import pytest

from lodcut.clement import build_clement
from lodcut.corrector import CorrectorProblem
from lodcut.geometry import build_shape
from lodcut.mesh import build_hierarchy
from lodcut.space import build_space


def make_problem(kind="LShape", m=3, n=5, k=2, enrichment="box", **params):
    shape = build_shape(kind, 2.0**-n, **params)
    hier = build_hierarchy(shape, m, n, k, enrichment)
    space = build_space(hier)
    clem = build_clement(space)
    return hier, space, clem, CorrectorProblem(space, clem)


@pytest.fixture(scope="session")
def lshape():
    """L-shape, H=1/8, h=1/32, correctors in a box around the corner."""
    return make_problem()


@pytest.fixture(scope="session")
def cut_lshape():
    """Cut L-shape with a straight cut through the last coarse column."""
    from lodcut.geometry import Horizontal

    return make_problem("CutLShape", 3, 5, 1, "cut", cut=Horizontal(3 / 32), bc="DD")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
