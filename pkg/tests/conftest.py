import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_spd(rng, d, scale=1.0):
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T + (0.3 + rng.uniform()) * np.eye(d))


def random_gl(rng, d):
    """Random invertible matrix, re-drawn until well conditioned."""
    while True:
        a = rng.normal(size=(d, d))
        if abs(np.linalg.det(a)) > 0.2:
            return a
