import os
import sys
from pathlib import Path

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from core.koopman.builder import build_lifted
from core.microgrid.dynamics import initial_state
from core.microgrid.params import build_params, load_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
TEST_CONFIG = CONFIG_DIR / "ieee-3der-testsystem.toml"
RL_CONFIG = CONFIG_DIR / "ieee-3der-rl-load.toml"


@pytest.fixture(scope="session")
def test_config():
    return load_config(TEST_CONFIG)


@pytest.fixture(scope="session")
def test_params(test_config):
    return build_params(test_config)


@pytest.fixture(scope="session")
def rl_params():
    return build_params(load_config(RL_CONFIG))


@pytest.fixture(scope="session")
def table_state(test_params, test_config):
    return initial_state(test_params, test_config.initial)


@pytest.fixture(scope="session")
def lifted_model(test_params):
    return build_lifted(test_params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
