import numpy as np
import pytest

from cocycle_lab import Cocycle, MatrixField, cat_map
from cocycle_lab.config import _NEAR_IDENTITY, build_generator


@pytest.fixture(scope="session")
def cat():
    return cat_map()


@pytest.fixture(scope="session")
def near_identity(cat):
    """Analytic, fiber-bunched cocycle close to the identity."""
    return Cocycle(cat, build_generator(_NEAR_IDENTITY, "near_identity"))


@pytest.fixture(scope="session")
def golden():
    """Eigenvalues of the cat map: phi^2 and phi^-2."""
    phi = (1 + np.sqrt(5)) / 2
    return phi**2, phi**-2


def constant(cat, M):
    return Cocycle(cat, MatrixField.constant(np.asarray(M, dtype=float)))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
