import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from pbelab.mdp import FiniteMdp

settings.register_profile(
    "default", max_examples=60, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def dirichlet_mdp(seed, n, gamma=0.9, lam=0.0):
    rng = np.random.default_rng(seed)
    T = rng.dirichlet(np.ones(n), size=n)
    return FiniteMdp(T, rng.normal(size=n), gamma, lam)


@st.composite
def mdps(draw, max_states=8, lam=None):
    n = draw(st.integers(2, max_states))
    seed = draw(st.integers(0, 2**32 - 1))
    gamma = draw(st.floats(0.0, 0.99))
    lam = draw(st.floats(0.0, 0.95)) if lam is None else lam
    return dirichlet_mdp(seed, n, gamma, lam)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # expose the outcome of each phase to fixtures (used by the acceptance lines)
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)
