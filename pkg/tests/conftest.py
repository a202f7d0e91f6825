import numpy as np
import pytest

from frugal_ris.channel import SignalModel, fspl_gains, make_schedule
from frugal_ris.config import GridSpec, Scenario


@pytest.fixture(scope="session")
def scenario():
    return Scenario()


@pytest.fixture(scope="session")
def quiet_scenario():
    """Reference geometry without receiver noise."""
    return Scenario(n0_dbm_hz=float("-inf"))


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


def draw(scenario, seed=0):
    rng = np.random.default_rng([seed, 0])
    model = SignalModel(scenario, make_schedule(scenario, rng))
    return model, fspl_gains(scenario, rng), rng


@pytest.fixture(scope="session")
def table1_draw(scenario):
    return draw(scenario)


@pytest.fixture(scope="session")
def quiet_draw(quiet_scenario):
    return draw(quiet_scenario)
