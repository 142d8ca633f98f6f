"""
Tests for settings.py: environment variables and worker resolution.
"""
import os
import pytest


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("BELLML_WORKERS", "BELLML_LOG_LEVEL", "BELLML_CONFIG"):
        monkeypatch.delenv(name, raising=False)


def test_defaults_from_empty_environment():
    from bellml.settings import load_settings

    settings = load_settings()

    assert settings.workers == (os.cpu_count() or 1)
    assert settings.log_level == "INFO"
    assert settings.config_path is None


def test_environment_values_are_read(monkeypatch):
    from bellml.settings import load_settings

    monkeypatch.setenv("BELLML_WORKERS", "3")
    monkeypatch.setenv("BELLML_LOG_LEVEL", "debug")
    monkeypatch.setenv("BELLML_CONFIG", "/tmp/run.yaml")

    settings = load_settings()

    assert settings.workers == 3
    assert settings.log_level == "DEBUG"
    assert settings.config_path == "/tmp/run.yaml"


@pytest.mark.parametrize(
    "name,value",
    [("BELLML_WORKERS", "abc"), ("BELLML_WORKERS", "-1"), ("BELLML_LOG_LEVEL", "LOUD")],
)
def test_bad_environment_values_raise(monkeypatch, name, value):
    """Test that invalid environment settings fail loudly instead of falling back"""
    from bellml.errors import ConfigurationError
    from bellml.settings import load_settings

    monkeypatch.setenv(name, value)

    with pytest.raises(ConfigurationError, match=name):
        load_settings()


def test_resolve_workers(monkeypatch):
    from bellml.settings import resolve_workers

    monkeypatch.setenv("BELLML_WORKERS", "5")

    assert resolve_workers(2) == 2
    assert resolve_workers(0) == 5
    assert resolve_workers(None) == 5
