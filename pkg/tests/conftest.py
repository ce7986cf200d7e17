import numpy as np
import pytest

from fillscape.config import LabConfig, set_config
from fillscape.logger import init_logger


@pytest.fixture(scope="session", autouse=True)
def quiet_logger():
    """Library code logs through the global logger; keep it quiet for the suite."""
    return init_logger(verbose=False)


@pytest.fixture(autouse=True)
def lab_config():
    """Serial, default configuration for every test."""
    cfg = set_config(LabConfig(threads=1))
    yield cfg
    set_config(LabConfig(threads=1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
