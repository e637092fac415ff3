"""
Logging configuration for the surrogate UQ toolkit.
Provides audit logging of pipeline stages and condenses numeric payloads.
"""
import os
import json
import logging
from typing import Optional, Any
from pathlib import Path

import numpy as np


# Sequences longer than this are summarized instead of logged verbatim
MAX_INLINE_ITEMS = 8


def summarize_data(data: Any) -> Any:
    """
    Condense numeric payloads for logging.

    Args:
        data: Data to summarize

    Returns:
        Copy of data where arrays and long lists are replaced by a shape/min/max summary
    """
    if isinstance(data, np.ndarray):
        if data.size <= MAX_INLINE_ITEMS:
            return data.tolist()
        finite = data[np.isfinite(data)] if np.issubdtype(data.dtype, np.number) else None
        summary = {"shape": list(data.shape)}
        if finite is not None and finite.size:
            summary["min"] = float(finite.min())
            summary["max"] = float(finite.max())
        return summary
    if isinstance(data, dict):
        return {key: summarize_data(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        if len(data) > MAX_INLINE_ITEMS and all(isinstance(v, (int, float)) for v in data):
            return summarize_data(np.asarray(data, dtype=float))
        return [summarize_data(item) for item in data]
    if isinstance(data, np.generic):
        return data.item()
    return data


class AuditLogFormatter(logging.Formatter):
    """Custom formatter that condenses array arguments."""

    def format(self, record):
        if record.args:
            record.args = summarize_data(record.args)
            if isinstance(record.args, list):
                record.args = tuple(record.args)
        return super().format(record)


class UqSurroLogger:
    """
    Toolkit logger: warnings go to the console, everything from DEBUG up
    goes to the run's log file once a log directory is set.
    """

    DEFAULT_LOG_FILE = "uqsurro.log"
    FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    CONSOLE_FORMAT = "%(levelname)s: %(message)s"

    def __init__(self, name: str = "uqsurro", log_dir: Optional[str] = None, level: int = logging.INFO):
        """
        Args:
            name: Name of the underlying logging.Logger
            log_dir: Directory receiving the log file (console only when omitted)
            level: Threshold of the underlying logger
        """
        self.name = name
        self.log_dir = log_dir
        self.logger = logging.getLogger(name)
        self.logger.setLevel(level)
        self.logger.propagate = False
        self._install_handlers()

    @property
    def log_file(self) -> Optional[str]:
        if not self.log_dir:
            return None
        return os.path.join(self.log_dir, self.DEFAULT_LOG_FILE)

    def _file_handler(self) -> logging.Handler:
        Path(self.log_dir).mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(self.log_file, encoding="utf-8")
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(AuditLogFormatter(self.FILE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
        return handler

    def _console_handler(self) -> logging.Handler:
        handler = logging.StreamHandler()
        handler.setLevel(logging.WARNING)
        handler.setFormatter(AuditLogFormatter(self.CONSOLE_FORMAT))
        return handler

    def _install_handlers(self):
        """Replace any handlers left by a previous run."""
        for handler in list(self.logger.handlers):
            self.logger.removeHandler(handler)
            handler.close()
        if self.log_dir:
            self.logger.addHandler(self._file_handler())
        self.logger.addHandler(self._console_handler())

    def audit(self, action: str, details: Optional[dict] = None):
        """
        Record a pipeline event as `AUDIT: ACTION | {json}`.

        Args:
            action: Upper-case event name, e.g. TRAIN_MODEL
            details: Event payload; arrays and long numeric lists are condensed
        """
        payload = summarize_data(details) if details else {}
        self.logger.info("AUDIT: %s | %s", action, json.dumps(payload, sort_keys=True))

    def debug(self, message: str, *args):
        self.logger.debug(message, *args)

    def warning(self, message: str, *args):
        self.logger.warning(message, *args)

    def error(self, message: str, *args):
        self.logger.error(message, *args)

    def exception(self, message: str, *args):
        """Error with the active traceback attached."""
        self.logger.exception(message, *args)


_logger: Optional[UqSurroLogger] = None


def get_logger() -> UqSurroLogger:
    """Shared logger, created console-only on first use."""
    global _logger
    if _logger is None:
        _logger = UqSurroLogger()
    return _logger


def configure_logging(log_dir: Optional[str] = None, level: int = logging.INFO) -> UqSurroLogger:
    """
    Point the shared logger at a run's logs/ directory.

    Args:
        log_dir: Directory for uqsurro.log
        level: Threshold of the underlying logger

    Returns:
        The new shared logger
    """
    global _logger
    _logger = UqSurroLogger(log_dir=log_dir, level=level)
    return _logger


def log_audit(action: str, details: Optional[dict] = None):
    """Audit an event on the shared logger."""
    get_logger().audit(action, details)
