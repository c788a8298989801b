import numpy as np
import pytest

from gfsa_lab.numerics import available_backends


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param
