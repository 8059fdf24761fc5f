# In tests/conftest.py
import numpy as np
import pytest
from loguru import logger

# --- Imports from your project ---
from DynamicEmulation.simulators import FORRESTER_DOMAIN, TimeGrid, evaluate_design, lhd
from DynamicEmulation.svdmodel import fit_svdgp
from tests.helpers import make_state


# --- Fixtures ---

@pytest.fixture
def rng():
    """A seeded generator so every test is reproducible."""
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def forrester_data():
    """A small Forrester training set on a 25-point time grid."""
    grid = TimeGrid(1.0, 2.0, 25)
    X = lhd(30, FORRESTER_DOMAIN, seed=7)
    X_test = lhd(5, FORRESTER_DOMAIN, seed=8)
    return {
        "grid": grid,
        "X": X,
        "Y": evaluate_design("forrester", X, grid),
        "X_test": X_test,
        "Y_test": evaluate_design("forrester", X_test, grid),
    }


@pytest.fixture(scope="session")
def fitted_model(forrester_data):
    """svdGP fitted on the Forrester training set."""
    return fit_svdgp(forrester_data["X"], forrester_data["Y"])


@pytest.fixture
def local_state():
    """A fitted local state with unselected candidates left to score."""
    return make_state(seed=3)


@pytest.fixture
def log_messages():
    """Collects loguru messages at WARNING and above for the duration of a test."""
    messages = []
    handler_id = logger.add(lambda m: messages.append(m.record["message"]), level="WARNING")
    yield messages
    logger.remove(handler_id)
