import numpy as np
import pytest

from collbreak.analysis import builtin_case


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["case1", "case2", "case3"])
def builtin(request):
    return builtin_case(request.param)
