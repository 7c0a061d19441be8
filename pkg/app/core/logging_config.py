"""
Logging configuration for the `app` package.
"""

import logging
import sys
from typing import Optional

from app.core.errors import ConfigError
from app.core.settings import get_settings

PACKAGE_LOGGER = "app"


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> logging.Logger:
    """
    Install a single stream handler on the package logger.

    Calling it again replaces the handler, so tests and repeated CLI
    invocations in one process do not duplicate output.

    Args:
        level (str, optional): Level name; defaults to `GRAPH_RERANK_LOG_LEVEL`.
        fmt (str, optional): Format string; defaults to `GRAPH_RERANK_LOG_FORMAT`.

    Returns:
        logging.Logger: The configured package logger.
    """

    settings = get_settings()
    level_name = (level or settings.log_level).upper()
    if not isinstance(logging.getLevelName(level_name), int):
        raise ConfigError(f"Unknown log level '{level_name}'")

    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(fmt or settings.log_format))
    logger.addHandler(handler)
    logger.setLevel(level_name)
    return logger
