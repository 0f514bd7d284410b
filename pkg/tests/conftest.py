import logging

import numpy as np
import pytest

from homotopica.simgen import ScenarioSpec, make_case, make_toy

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.ERROR, logger="homotopica")


@pytest.fixture(scope="session")
def toy():
    return make_toy(0)


@pytest.fixture(scope="session")
def case1_clean():
    return make_case(ScenarioSpec(case="homotopic", noise_sd=0.0, seed=11))


@pytest.fixture(scope="session")
def small_case1():
    """Case I on a 40 x 40 grid, cheap enough for many fits."""
    return make_case(ScenarioSpec(case="homotopic", grid=(40, 40), block_size=6,
                                  noise_sd=0.0, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
