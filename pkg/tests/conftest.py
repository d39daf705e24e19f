import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_symmetric(rng, p, scale=1.0):
    A = rng.standard_normal((p, p)) * scale
    return (A + A.T) / 2.0


def random_spd(rng, p, shift=None):
    A = rng.standard_normal((p, p))
    S = A @ A.T / p
    if shift is None:
        shift = 0.5
    return S + shift * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(0xBEEF)
