"""Shared fixtures: reference parameter points and cached expensive objects."""

import pytest

from psbatch.model import ModelParams, spectral

REFERENCE = ModelParams(rho=0.5, q=0.3)

# the three parameter points used throughout the acceptance checks
POINTS = [(0.5, 0.3), (0.3, 0.2), (0.2, 0.5)]

# stability grid {0.1..0.6} x {0.1..0.5} with 1 - rho - q >= 0.1 (27 points)
GRID = [
    (rho / 10.0, q / 10.0)
    for rho in range(1, 7)
    for q in range(1, 6)
    if 10 - rho - q >= 1
]


@pytest.fixture(scope="session")
def ref_params():
    return REFERENCE


@pytest.fixture(scope="session")
def sp_ref_s0():
    return spectral(REFERENCE, 0.0)


@pytest.fixture(scope="session")
def sp_ref_s1():
    return spectral(REFERENCE, 1.0)


@pytest.fixture(scope="session")
def mean_grid():
    """Analytic batch sojourn means on the 27-point grid, computed once."""
    from psbatch.solver import mean_batch_sojourn

    return {
        (rho, q): mean_batch_sojourn(ModelParams(rho, q)) for rho, q in GRID
    }


@pytest.fixture(scope="session")
def announce(request):
    """Write a line straight to the terminal, bypassing output capture."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def _announce(text: str) -> None:
        if reporter is not None:
            reporter.write_line(text)

    return _announce
