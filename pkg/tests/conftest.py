import numpy as np
import pytest
import sympy as sp

from fedosovkit.charts import double_shear_chart, oscillator_chart, polar_chart
from fedosovkit.connection import flat_connection_in_chart, zero_connection
from fedosovkit.fedosov import FedosovContext
from fedosovkit.oscillator import oscillator_connection, wigner_eigenfunction
from fedosovkit.symbolic import HBAR, coordinates


@pytest.fixture(scope="session")
def hbar():
    return HBAR


@pytest.fixture(scope="session")
def qp():
    return coordinates("q p")


@pytest.fixture(scope="session")
def TH():
    return coordinates("T H")


@pytest.fixture(scope="session")
def flat_ctx(qp):
    return FedosovContext(zero_connection(qp), order=6)


@pytest.fixture(scope="session")
def osc_ctx():
    return FedosovContext(oscillator_connection(), order=8)


@pytest.fixture(scope="session")
def polar_ctx():
    return FedosovContext(flat_connection_in_chart(polar_chart()), order=6)


@pytest.fixture(scope="session")
def shear_ctx():
    return FedosovContext(flat_connection_in_chart(double_shear_chart()), order=6)


@pytest.fixture(scope="session")
def wigner_grids():
    """W_0..W_3 at hbar = 1 on the default 256^2 window."""
    return [wigner_eigenfunction(n, 1.0).grid() for n in range(4)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
