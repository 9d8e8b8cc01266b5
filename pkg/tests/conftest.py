import numpy as np
import pytest

from flexscreen import CostModel, KernelFn, OuterFn, OutputGrid, TypeDistribution, TypeGrid
from flexscreen.solver import solve_example1, solve_example2


@pytest.fixture(scope="session")
def outputs():
    return OutputGrid.linspace(0.0, 1.0, 101)


@pytest.fixture(scope="session")
def types():
    return TypeGrid.linspace(0.2, 0.8, 41)


@pytest.fixture(scope="session")
def uniform():
    return TypeDistribution.uniform(0.2, 0.8)


@pytest.fixture(scope="session")
def quad_linear():
    """Linear family with z(x) = x^2."""
    return CostModel.linear(KernelFn.power(2.0))


@pytest.fixture(scope="session")
def square_outer():
    """Composite family, z = identity, K(m) = m^2."""
    return CostModel.composite(KernelFn.identity(), OuterFn.power(2.0))


@pytest.fixture(scope="session")
def ex1(quad_linear, uniform, types, outputs):
    return solve_example1(quad_linear, uniform, types, outputs)


@pytest.fixture(scope="session")
def ex2(square_outer, uniform, types, outputs):
    return solve_example2(square_outer, uniform, types, outputs)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
