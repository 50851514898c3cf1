import numpy as np
import pytest

from wdfqdet.config import profile


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def test_cfg():
    return profile("test")
