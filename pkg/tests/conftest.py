import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_dataset():
    from lapsekit import portfolio

    return portfolio.encode(portfolio.generate(portfolio.GeneratorConfig(n_policies=1500, seed=11)))
