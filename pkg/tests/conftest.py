import numpy as np
import pytest

from taigha.instrument import taigha_catalog
from taigha.simulate import load_preset, simulate_responses


@pytest.fixture(scope="session")
def catalog():
    return taigha_catalog()


@pytest.fixture(scope="session")
def preset():
    return load_preset("figure1_full")


@pytest.fixture(scope="session")
def study(preset):
    return simulate_responses(preset, 385, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k])
