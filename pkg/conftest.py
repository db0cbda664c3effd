"""
Shared pytest configuration for the Grauert tube toolkit tests.
"""

import numpy as np
import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale checks (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
