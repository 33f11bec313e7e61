"""
Logging configuration for the application.
"""

import logging
import sys
from pathlib import Path
from typing import Optional, Union
from config import LOG_LEVEL, LOG_FORMAT, LOG_FILE

def setup_logger(
    name: str,
    log_file: Optional[Union[str, Path]] = LOG_FILE,
    level: str = LOG_LEVEL
) -> logging.Logger:
    """
    Set up a logger with console and file handlers.

    Child loggers (``sfsci.sensing``, ``sfsci.fast``, ...) propagate to the
    logger configured here, so the CLI only calls this once for ``sfsci``.

    Args:
        name: Logger name
        log_file: Path to log file, or None for console only
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper()))

    # Remove existing handlers
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    formatter = logging.Formatter(LOG_FORMAT)

    # Console handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(logging.INFO)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # File handler
    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger
