"""Logging setup shared by the CLI entry points."""

import logging
from typing import Optional

from ..config import LOGGING_CONFIG


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """
    Configure root logging once for a CLI run.

    Args:
        level: Logging level name (defaults to LOGGING_CONFIG)
        log_file: Log file path; empty string disables the file handler
    """
    level = level or LOGGING_CONFIG["level"]
    log_file = LOGGING_CONFIG["file"] if log_file is None else log_file

    handlers: list = [logging.StreamHandler()]
    if log_file:
        handlers.insert(0, logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOGGING_CONFIG["format"],
        handlers=handlers,
        force=True,
    )
