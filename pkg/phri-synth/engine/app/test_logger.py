"""
Tests for the phri-synth logging system:
- Console and rotating file handlers
- Exception logging
- Stage timing decorator
- Episode outcome logging
"""

import io
import logging

import pytest

from app import logger as logger_module
from app.logger import (
    ConsoleFormatter,
    EpisodeContextFilter,
    get_logger,
    log_episode,
    log_exception,
    log_execution_time,
)
from app.settings import settings


def _reset_handlers():
    for name in ("test_logger.files", "episodes"):
        log = logging.getLogger(name)
        for handler in list(log.handlers):
            handler.close()
            log.removeHandler(handler)


@pytest.fixture
def log_dir(tmp_path, monkeypatch):
    _reset_handlers()
    monkeypatch.setattr(settings, "LOG_DIR", str(tmp_path))
    yield tmp_path
    _reset_handlers()


def _capture(log: logging.Logger) -> io.StringIO:
    stream = io.StringIO()
    handler = logging.StreamHandler(stream)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    return stream


def test_log_files_split_by_level(log_dir):
    """All messages reach app.log, only errors reach error.log"""
    log = get_logger("test_logger.files")
    log.setLevel(logging.DEBUG)
    log.info("an info message")
    log.error("an error message")
    for handler in log.handlers:
        handler.flush()

    app_log = (log_dir / "app.log").read_text()
    error_log = (log_dir / "error.log").read_text()
    assert "an info message" in app_log and "an error message" in app_log
    assert "an error message" in error_log
    assert "an info message" not in error_log


def test_empty_log_dir_disables_files(monkeypatch):
    monkeypatch.setattr(settings, "LOG_DIR", "")
    assert logger_module.logs_dir() is None


def test_exception_logging():
    log = get_logger("test_logger.exceptions")
    log.setLevel(logging.DEBUG)
    stream = _capture(log)
    try:
        1 / 0
    except ZeroDivisionError as e:
        log_exception(log, e, "Division by zero error")
    output = stream.getvalue()
    assert "ERROR Division by zero error: division by zero" in output
    assert "Exception traceback" in output


def test_timing_decorator_logs_completion_and_failure():
    log = get_logger("test_logger.timing")
    log.setLevel(logging.DEBUG)
    stream = _capture(log)

    @log_execution_time(logger=log)
    def stage(x):
        return x * 2

    @log_execution_time(logger=log, level=logging.INFO)
    def failing_stage():
        raise ValueError("boom")

    assert stage(21) == 42
    with pytest.raises(ValueError):
        failing_stage()
    output = stream.getvalue()
    assert "Completed test_timing_decorator_logs_completion_and_failure.<locals>.stage" in output
    assert "INFO Failed" in output and "boom" in output


def test_episode_log_carries_context(log_dir):
    log_episode("00ff00ff00ff00ff", "observation", "insufficient_points", 12.5, "Episode rejected")
    for handler in logging.getLogger("episodes").handlers:
        handler.flush()
    line = (log_dir / "episodes.log").read_text().strip().splitlines()[-1]
    assert "Episode rejected" in line
    assert "episode=00ff00ff00ff00ff" in line
    assert "stage=observation" in line
    assert "outcome=insufficient_points" in line
    assert "duration=12.50ms" in line


def test_episode_filter_is_removed_after_logging(log_dir):
    log_episode("a", "write", "accepted", 1.0)
    assert not any(isinstance(f, EpisodeContextFilter) for f in logging.getLogger("episodes").filters)


def test_console_colour_only_when_enabled():
    record = logging.LogRecord("x", logging.WARNING, __file__, 1, "careful", None, None)
    assert "\033[" not in ConsoleFormatter(use_color=False).format(record)
    assert "\033[33mWARNING\033[0m" in ConsoleFormatter(use_color=True).format(record)


def test_no_color_environment_disables_colour(monkeypatch):
    monkeypatch.setenv("NO_COLOR", "1")
    assert logger_module._console_color_enabled() is False
