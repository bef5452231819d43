import numpy as np
import pytest

from locbridge.testbeds import PeriodicGaussianSpec, sample_periodic_gaussian


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def gauss_small():
    """Periodic Gaussian with d=11, M=40 (fast unit-test version of the testbed)."""
    return sample_periodic_gaussian(PeriodicGaussianSpec.tridiagonal(11), 40, seed=3)


@pytest.fixture(scope="session")
def gauss_testbed():
    """The d=101, M=100 tridiagonal testbed."""
    return sample_periodic_gaussian(PeriodicGaussianSpec.tridiagonal(101), 100, seed=1)


def fd_gradient(f, x, h=1e-5):
    """Central differences of a scalar function."""
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(cid, passed, detail):
    ACCEPTANCE[cid] = (bool(passed), detail)
    print(f"{cid}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: ("GBLP".index(c[0]), c)):
        passed, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid}: {'PASS' if passed else 'FAIL'}  {detail}")
