"""
Centralized Logging Configuration

Quiet by default: only errors reach stderr unless quiet mode is switched off
or a level is requested. Reports go to stdout and never share a stream with logs.
"""

import logging
import os
import sys
from typing import Optional

QUIET_MODE = os.getenv('FTAP_QUIET_MODE', 'true').lower() == 'true'

LOG_FORMAT = '%(levelname)s: %(message)s'


def setup_logging(
    name: Optional[str] = None,
    level: Optional[str] = None,
    quiet_mode: Optional[bool] = None
) -> logging.Logger:
    """
    Setup logging with quiet mode enabled by default.

    Args:
        name: Logger name (usually __name__)
        level: Log level override ('DEBUG', 'INFO', 'WARNING', 'ERROR')
        quiet_mode: Override global quiet mode setting

    Returns:
        Configured logger
    """
    if quiet_mode is None:
        quiet_mode = QUIET_MODE

    default_level = 'ERROR' if quiet_mode else 'INFO'
    if level is None:
        level = os.getenv('FTAP_LOG_LEVEL', default_level)

    numeric_level = getattr(logging, level.upper(), None)
    if not isinstance(numeric_level, int):
        raise ValueError(f"Unknown log level: {level}")

    logging.basicConfig(
        level=numeric_level,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True
    )
    return logging.getLogger(name or __name__)


def enable_quiet_mode() -> None:
    """Enable quiet mode globally."""
    global QUIET_MODE
    QUIET_MODE = True
    os.environ['FTAP_QUIET_MODE'] = 'true'
    logging.getLogger().setLevel(logging.ERROR)


def disable_quiet_mode() -> None:
    """Disable quiet mode globally."""
    global QUIET_MODE
    QUIET_MODE = False
    os.environ['FTAP_QUIET_MODE'] = 'false'
    logging.getLogger().setLevel(logging.INFO)


def is_quiet_mode() -> bool:
    return QUIET_MODE
