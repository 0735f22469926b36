from __future__ import annotations
from enum import Enum

import logging

__all__: tuple[str, ...] = (
    "LogLevels",
    "setup_logging",
)


class LogLevels(Enum):
    NOTSET = 0
    DEBUG = 10
    INFO = 20
    WARNING = 30
    ERROR = 40
    CRITICAL = 50


def setup_logging(level: LogLevels | str = LogLevels.WARNING) -> logging.Logger:
    """Attach a stderr handler to the ``sparse_stealth`` logger.

    Only the command line entry point calls this; library code never
    configures handlers.
    """
    if isinstance(level, str):
        level = LogLevels[level.upper()]
    logger = logging.getLogger("sparse_stealth")
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(level.value)
    return logger
