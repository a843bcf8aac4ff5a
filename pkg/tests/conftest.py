import numpy as np
import pytest

from han_sr.tensor import set_finite_checks


@pytest.fixture(autouse=True)
def finite_checks():
    """Run every test with post-op NaN/Inf assertions enabled."""
    previous = set_finite_checks(True)
    yield
    set_finite_checks(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
