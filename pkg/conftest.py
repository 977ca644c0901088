import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the end-to-end statistical acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _sequential_trials(monkeypatch):
    monkeypatch.delenv("NOISYKIT_THREADS", raising=False)
    monkeypatch.delenv("NOISYKIT_DB", raising=False)
    monkeypatch.setattr("settings.DB_PATH", "")
