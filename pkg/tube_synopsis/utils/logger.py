"""
Logging utilities for the synopsis engine
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional

LOG_LEVEL_ENV = "TUBE_SYNOPSIS_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

_handlers = []


def _resolve_level(verbose: bool, level: Optional[str]) -> int:
    if verbose:
        return logging.DEBUG
    name = (level or os.getenv(LOG_LEVEL_ENV) or "INFO").upper()
    resolved = logging.getLevelName(name)
    return resolved if isinstance(resolved, int) else logging.INFO


def reset_logging() -> None:
    """Detach the handlers installed by setup_logging"""
    root_logger = logging.getLogger()
    for handler in _handlers:
        root_logger.removeHandler(handler)
        handler.close()
    _handlers.clear()


def setup_logging(verbose: bool = False, log_file: Optional[str] = None, level: Optional[str] = None) -> int:
    """Setup logging on stderr (stdout carries the JSON summary); returns the effective level"""
    log_level = _resolve_level(verbose, level)
    formatter = logging.Formatter(LOG_FORMAT)

    root_logger = logging.getLogger()
    # repeated CLI invocations in one process must not stack handlers
    reset_logging()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    root_logger.setLevel(log_level)
    root_logger.addHandler(console_handler)
    _handlers.append(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path)
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)
        _handlers.append(file_handler)

    # Suppress noisy loggers
    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    return log_level
