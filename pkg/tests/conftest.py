import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running solver tests")
    config.addinivalue_line("markers",
                            "acceptance: the acceptance-criteria gate")
