import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def ref_arm():
    from helpers import make_ref_arm

    return make_ref_arm()
