from __future__ import annotations

import numpy as np
import pytest

from ctqo.problems import make_problem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mc6():
    return make_problem("maxcut", 6, 101)


@pytest.fixture
def sk5():
    return make_problem("sk", 5, 202)
