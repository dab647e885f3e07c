import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from app.settings import apply_simulation_settings

settings.register_profile("fast", max_examples=15, deadline=None)
settings.register_profile(
    "ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture(autouse=True)
def default_simulation_settings():
    """Jeder Test startet mit den Paket-Defaults im simulation-Abschnitt."""
    apply_simulation_settings({})
    yield
    apply_simulation_settings({})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
