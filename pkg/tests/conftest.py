import numpy as np
import pytest

from nlspw.grid import GridSpec, ModelParams
from nlspw.ground_state import solve_ground_state

# lattices on which each model's ground state is resolved to the level the
# tests ask for
GS_GRIDS = {
    (1, 7.0): (512, 20.0),
    (2, 4.0): (256, 16.0),
    (3, 3.0): (128, 9.0),
}


def _solve(d, p, n, L, tol=1e-11):
    return solve_ground_state(ModelParams(d, p), GridSpec(d, n, L), tol=tol)


@pytest.fixture(scope="session")
def gs1():
    return _solve(1, 7.0, 512, 20.0)


@pytest.fixture(scope="session")
def gs2():
    return _solve(2, 4.0, 256, 16.0)


@pytest.fixture(scope="session")
def gs3():
    return _solve(3, 3.0, 128, 9.0)


@pytest.fixture(scope="session")
def gs3_coarse():
    """(3,3) ground state on the 64^3, L = 12 evolution lattice."""
    return _solve(3, 3.0, 64, 12.0)


@pytest.fixture(scope="session")
def gs1_fine():
    """(1,7) ground state on a lattice fine enough to follow blowup to 20x."""
    return _solve(1, 7.0, 2048, 20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def soliton(x, p):
    """((p+1)/2)^{1/(p-1)} sech^{2/(p-1)}((p-1) x / 2)."""
    a = ((p + 1.0) / 2.0) ** (1.0 / (p - 1.0))
    return a / np.cosh(0.5 * (p - 1.0) * x) ** (2.0 / (p - 1.0))


def soliton_second_derivative(x, p):
    alpha = 2.0 / (p - 1.0)
    beta = 0.5 * (p - 1.0)
    a = ((p + 1.0) / 2.0) ** (1.0 / (p - 1.0))
    sech = 1.0 / np.cosh(beta * x)
    return a * beta ** 2 * (alpha ** 2 * sech ** alpha - alpha * (alpha + 1.0) * sech ** (alpha + 2.0))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
