"""Shared test fixtures and helpers."""

import numpy as np
import pytest

try:
    from threadpoolctl import threadpool_limits

    # Small-matrix workload: multithreaded BLAS only adds latency and makes
    # the timing-bounded acceptance checks flaky.
    _limiter = threadpool_limits(limits=1)
except ImportError:
    _limiter = None

from symvio.groups import Pose
from symvio.states import SymElement, TotalState


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def t_cam(rng):
    return Pose.random(rng, radius=0.3)


def random_state(rng, n, t_cam):
    return TotalState.random(rng, n, t_cam)


def random_sym(rng, ids, spread=0.6):
    return SymElement.random(rng, ids, spread)
