"""Console logger levels and prefixes."""

import pytest

import src.infrastructure.logger as logger_module
from src.infrastructure.logger import ConsoleLogger, Logger, NoopLogger, get_level, get_logger, set_level


@pytest.fixture(autouse=True)
def reset_level(monkeypatch):
    monkeypatch.setattr(logger_module, "_current_level", None)
    monkeypatch.delenv("EEGROB_LOG_LEVEL", raising=False)


def test_prefixed_lines_go_to_stderr(capsys):
    get_logger("Trainer").info("epoch 1")
    err = capsys.readouterr().err
    assert "INFO  [Trainer] epoch 1" in err


def test_messages_below_the_level_are_dropped(capsys):
    set_level("warn")
    log = ConsoleLogger("x")
    log.info("hidden")
    log.error("shown")
    err = capsys.readouterr().err
    assert "hidden" not in err and "shown" in err


def test_level_from_environment(monkeypatch):
    monkeypatch.setenv("EEGROB_LOG_LEVEL", "DEBUG")
    assert get_level() == "debug"
    monkeypatch.setenv("EEGROB_LOG_LEVEL", "loud")
    assert get_level() == "info"


def test_unknown_level_is_rejected():
    with pytest.raises(ValueError):
        set_level("verbose")


def test_extra_arguments_are_rendered_as_json(capsys):
    get_logger("cli").warn("cell failed", {"cell": "CNN_Bk4/sub-01/0"})
    assert '"cell": "CNN_Bk4/sub-01/0"' in capsys.readouterr().err


def test_noop_logger_and_singleton(capsys):
    NoopLogger().error("nothing")
    assert capsys.readouterr().err == ""
    assert Logger.get_instance() is Logger()
    Logger.get_instance().info("global")
    assert "[eeg-robustness] global" in capsys.readouterr().err
