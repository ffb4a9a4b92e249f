import logging

import numpy as np
import pytest
from hypothesis import settings

from diffpbd.chain import SimConfig, pendulum_chain

settings.register_profile("repo", max_examples=40, deadline=None)
settings.load_profile("repo")


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING)


@pytest.fixture
def double_pendulum():
    return pendulum_chain([1.0, 1.0], [1.0, 1.0], angles=[0.3, 0.0])


@pytest.fixture
def cfg():
    return SimConfig()


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
