import numpy as np
import pytest
from hypothesis import strategies as st

from zrp.model import RateFamily, SiteRate


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running check")


@st.composite
def site_rates(draw, max_head=4):
    """Rate functions with a random positive head and a linear or periodic tail."""
    k_head = draw(st.integers(0, max_head))
    head = [0.0] + [draw(st.floats(0.2, 4.0)) for _ in range(k_head)]
    theta = draw(st.floats(0.3, 3.0))
    offsets = draw(st.sampled_from([(0.0,), (0.0, 0.5), (0.2, 0.0, 0.4)]))
    return SiteRate(tuple(head), theta, offsets)


@st.composite
def rate_families(draw, min_sites=2, max_sites=3):
    n = draw(st.integers(min_sites, max_sites))
    return RateFamily([draw(site_rates()) for _ in range(n)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
