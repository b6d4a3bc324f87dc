import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "slow: long statistical reproduction (runs by default; deselect "
        "with -m 'not slow')")
