"""Logger infrastructure module."""

import json
import os
import sys
from datetime import datetime
from typing import Any, Dict, Optional


LEVELS: Dict[str, int] = {"debug": 10, "info": 20, "warn": 30, "error": 40}
DEFAULT_LEVEL = "info"


class ILogger:
    """Logger interface."""

    def debug(self, message: str, *args: Any) -> None:
        """Log debug message."""
        raise NotImplementedError

    def info(self, message: str, *args: Any) -> None:
        """Log info message."""
        raise NotImplementedError

    def warn(self, message: str, *args: Any) -> None:
        """Log warning message."""
        raise NotImplementedError

    def error(self, message: str, *args: Any) -> None:
        """Log error message."""
        raise NotImplementedError


_current_level: Optional[str] = None


def set_level(level: str) -> None:
    """Set the process-wide minimum level."""
    global _current_level
    level = level.lower()
    if level not in LEVELS:
        raise ValueError(f"Unknown log level '{level}', expected one of {', '.join(LEVELS)}")
    _current_level = level


def get_level() -> str:
    """Current minimum level; EEGROB_LOG_LEVEL until set explicitly."""
    if _current_level is not None:
        return _current_level
    env_level = os.getenv("EEGROB_LOG_LEVEL", DEFAULT_LEVEL).lower()
    return env_level if env_level in LEVELS else DEFAULT_LEVEL


class ConsoleLogger(ILogger):
    """Logger writing timestamped, prefixed lines to stderr."""

    def __init__(self, prefix: str = ""):
        self.prefix = f"[{prefix}] " if prefix else ""

    def _write(self, level: str, message: str, args: tuple) -> None:
        if LEVELS[level] < LEVELS[get_level()]:
            return
        stamp = datetime.now().isoformat(timespec="seconds")
        sys.stderr.write(f"{stamp} {level.upper():5s} {self.prefix}{message}\n")
        if args:
            sys.stderr.write(f"{json.dumps(args, indent=2, default=str)}\n")

    def debug(self, message: str, *args: Any) -> None:
        self._write("debug", message, args)

    def info(self, message: str, *args: Any) -> None:
        self._write("info", message, args)

    def warn(self, message: str, *args: Any) -> None:
        self._write("warn", message, args)

    def error(self, message: str, *args: Any) -> None:
        self._write("error", message, args)


class NoopLogger(ILogger):
    """No-op logger that doesn't do any logging."""

    def debug(self, message: str, *args: Any) -> None:
        pass

    def info(self, message: str, *args: Any) -> None:
        pass

    def warn(self, message: str, *args: Any) -> None:
        pass

    def error(self, message: str, *args: Any) -> None:
        pass


def create_logger(prefix: Optional[str] = None) -> ILogger:
    """Create a logger instance with optional prefix."""
    return ConsoleLogger(prefix or "")


def get_logger(prefix: str) -> ILogger:
    """Get a logger instance with a prefix."""
    return create_logger(prefix)


class Logger:
    """Singleton logger class for global access."""

    _instance: Optional["Logger"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance.logger = ConsoleLogger("eeg-robustness")
        return cls._instance

    @classmethod
    def get_instance(cls) -> "Logger":
        """Get singleton instance."""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    def debug(self, message: str, *args: Any) -> None:
        self.logger.debug(message, *args)

    def info(self, message: str, *args: Any) -> None:
        self.logger.info(message, *args)

    def warn(self, message: str, *args: Any) -> None:
        self.logger.warn(message, *args)

    def error(self, message: str, *args: Any) -> None:
        self.logger.error(message, *args)
