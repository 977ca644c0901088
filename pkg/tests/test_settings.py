import numpy as np
import pytest

import settings


def test_same_seed_same_stream():
    a = settings.make_rng(5).standard_normal(4)
    b = settings.make_rng(5).standard_normal(4)
    np.testing.assert_array_equal(a, b)


def test_negative_seed():
    with pytest.raises(ValueError):
        settings.make_rng(-1)


@pytest.mark.parametrize("raw, expected", [("", 0), ("4", 4), (" 2 ", 2)])
def test_thread_count(monkeypatch, raw, expected):
    monkeypatch.setenv("NOISYKIT_THREADS", raw)
    assert settings.thread_count() == expected


@pytest.mark.parametrize("raw", ["many", "-1"])
def test_bad_thread_count(monkeypatch, raw):
    monkeypatch.setenv("NOISYKIT_THREADS", raw)
    with pytest.raises(ValueError):
        settings.thread_count()


def test_registry_path_precedence(monkeypatch):
    assert settings.registry_path() == ""
    monkeypatch.setenv("NOISYKIT_DB", "env.db")
    assert settings.registry_path() == "env.db"
    assert settings.registry_path("flag.db") == "flag.db"
