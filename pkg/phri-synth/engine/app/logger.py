"""
Logging module for the phri-synth pipeline.

This module provides a centralized logging configuration with:
- Multiple log levels (DEBUG, INFO, WARNING, ERROR, CRITICAL)
- A console handler on stderr (stdout is reserved for machine-readable output)
- Rotating file handlers for all messages and for errors only
- An episode logger whose records carry the episode context
- Exception logging and stage timing utilities
"""

import logging
import os
import sys
import time
import traceback
from functools import wraps
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Optional, TypeVar, cast

from .settings import settings

F = TypeVar("F", bound=Callable[..., Any])

MAX_BYTES = getattr(settings, "LOG_FILE_MAX_SIZE", 10 * 1024 * 1024)
BACKUP_COUNT = getattr(settings, "LOG_FILE_BACKUP_COUNT", 5)

VERBOSE_FORMATTER = logging.Formatter(
    "%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s"
)
SIMPLE_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
EPISODE_FORMATTER = logging.Formatter(
    "%(asctime)s - %(levelname)s - %(message)s - episode=%(episode)s - "
    "stage=%(stage)s - outcome=%(outcome)s - duration=%(duration).2fms"
)

DEFAULT_LOG_LEVEL = getattr(logging, str(getattr(settings, "LOG_LEVEL", "INFO")).upper(), logging.INFO)

_LEVEL_COLORS = {
    logging.DEBUG: "\033[36m",
    logging.INFO: "\033[32m",
    logging.WARNING: "\033[33m",
    logging.ERROR: "\033[31m",
    logging.CRITICAL: "\033[1;31m",
}


class ConsoleFormatter(logging.Formatter):
    """Colours the level name when stderr is a terminal and NO_COLOR is unset."""

    def __init__(self, use_color: bool):
        super().__init__(SIMPLE_FORMAT)
        self.use_color = use_color

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        if not self.use_color:
            return text
        color = _LEVEL_COLORS.get(record.levelno, "")
        return text.replace(record.levelname, f"{color}{record.levelname}\033[0m", 1)


def _console_color_enabled() -> bool:
    return "NO_COLOR" not in os.environ and hasattr(sys.stderr, "isatty") and sys.stderr.isatty()


def logs_dir() -> Optional[Path]:
    """Directory for log files, or None when file logging is disabled."""
    raw = getattr(settings, "LOG_DIR", "logs")
    if not raw:
        return None
    path = Path(raw)
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_logger(name: str) -> logging.Logger:
    """
    Get a configured logger with the specified name.

    Args:
        name: The name of the logger, typically __name__ of the module

    Returns:
        A configured logger instance with appropriate handlers
    """
    logger = logging.getLogger(name)

    # Only configure handlers if they haven't been added yet
    if not logger.handlers:
        logger.setLevel(DEFAULT_LOG_LEVEL)
        logger.propagate = False

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(ConsoleFormatter(_console_color_enabled()))
        logger.addHandler(console_handler)

        directory = logs_dir()
        if directory is not None:
            file_handler = RotatingFileHandler(
                directory / "app.log", maxBytes=MAX_BYTES, backupCount=BACKUP_COUNT
            )
            file_handler.setFormatter(VERBOSE_FORMATTER)
            logger.addHandler(file_handler)

            error_file_handler = RotatingFileHandler(
                directory / "error.log", maxBytes=MAX_BYTES, backupCount=BACKUP_COUNT
            )
            error_file_handler.setLevel(logging.ERROR)
            error_file_handler.setFormatter(VERBOSE_FORMATTER)
            logger.addHandler(error_file_handler)

    return logger


def log_exception(logger: logging.Logger, e: Exception, message: str = "An exception occurred"):
    """
    Log an exception with traceback information.

    Args:
        logger: The logger instance
        e: The exception to log
        message: Optional message to include with the exception
    """
    logger.error(f"{message}: {str(e)}")
    logger.debug(f"Exception traceback: {''.join(traceback.format_tb(e.__traceback__))}")


class EpisodeContextFilter(logging.Filter):
    """
    Logging filter that adds episode context information to log records.
    """

    def __init__(self, episode: str = "", stage: str = "", outcome: str = "", duration: float = 0.0):
        super().__init__()
        self.episode = episode
        self.stage = stage
        self.outcome = outcome
        self.duration = duration

    def filter(self, record):
        record.episode = self.episode
        record.stage = self.stage
        record.outcome = self.outcome
        record.duration = self.duration
        return True


def get_episode_logger() -> logging.Logger:
    """
    Get a logger for per-episode collection outcomes (episodes.log).
    """
    logger = logging.getLogger("episodes")

    if not logger.handlers:
        logger.setLevel(logging.INFO)
        logger.propagate = False

        directory = logs_dir()
        if directory is not None:
            file_handler = RotatingFileHandler(
                directory / "episodes.log", maxBytes=MAX_BYTES, backupCount=BACKUP_COUNT
            )
            file_handler.setFormatter(EPISODE_FORMATTER)
            logger.addHandler(file_handler)

        if getattr(settings, "LOG_EPISODES_TO_CONSOLE", False) or directory is None:
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setFormatter(EPISODE_FORMATTER)
            logger.addHandler(console_handler)

    return logger


def log_episode(episode: str, stage: str, outcome: str, duration_ms: float, message: str = "Episode finished"):
    """Write one outcome line to the episode log with its context attached."""
    logger = get_episode_logger()
    context_filter = EpisodeContextFilter(episode=episode, stage=stage, outcome=outcome, duration=duration_ms)
    logger.addFilter(context_filter)
    try:
        logger.info(message)
    finally:
        logger.removeFilter(context_filter)


def log_execution_time(logger: Optional[logging.Logger] = None, level: int = logging.DEBUG):
    """
    Decorator to log the execution time of a pipeline stage.

    Args:
        logger: The logger to use. If None, a logger will be created with the function's module name.
        level: The log level to use (default: DEBUG)
    """

    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args, **kwargs):
            nonlocal logger
            if logger is None:
                logger = get_logger(func.__module__)

            func_name = func.__qualname__
            logger.log(level, f"Executing {func_name}")

            start_time = time.perf_counter()
            try:
                result = func(*args, **kwargs)
                execution_time = (time.perf_counter() - start_time) * 1000
                logger.log(level, f"Completed {func_name} in {execution_time:.2f}ms")
                return result
            except Exception as e:
                execution_time = (time.perf_counter() - start_time) * 1000
                logger.log(level, f"Failed {func_name} after {execution_time:.2f}ms: {str(e)}")
                raise

        return cast(F, wrapper)

    return decorator
