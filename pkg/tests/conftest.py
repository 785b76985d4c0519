import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from datasche.model import FrameworkConfig, SystemState

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_config(n=6, m=3, **kw):
    base = dict(n_sources=n, n_workers=m, rho=1.0, zeta=500.0, delta=0.02, epsilon=0.1)
    base.update(kw)
    return FrameworkConfig(**base)


def random_state(rng, n, m, rho=1.0):
    d = rng.integers(0, 50, size=(n, m)).astype(float)
    mesh = rng.integers(0, 30, size=(m, m)).astype(float)
    big_d = np.triu(mesh, 1) + np.triu(mesh, 1).T
    f = rng.uniform(0, 80, size=m) * rho
    c = rng.uniform(0.5, 2.0, size=(n, m))
    e = rng.uniform(0.1, 1.0, size=(m, m))
    np.fill_diagonal(e, 0.0)
    p = rng.uniform(0.5, 2.0, size=m)
    return SystemState(d, big_d, f, c, e, p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def config():
    return make_config()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
