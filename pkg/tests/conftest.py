"""
Shared fixtures for the AirFC test suite.

Slow trend-reproduction tests are skipped unless --runslow is passed.
"""

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow trend tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    """i.i.d. CN(0, 1) test matrix."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def complex_normal():
    return crandn
