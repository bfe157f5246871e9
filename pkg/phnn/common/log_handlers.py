"""
Log Handlers

This module contains utility functions to set up logging
consistently
"""
import logging
import sys

LOG_FORMAT = "[%(asctime)s] [%(levelname)s] [%(module)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S %z"


def init_logging(app, level="INFO"):
    """Set up logging on stderr, leaving stdout to command results"""
    app.logger.propagate = False
    handler = logging.StreamHandler(sys.stderr)
    # Make all log formats consistent
    handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
    app.logger.handlers = [handler]
    set_level(app, level)
    app.logger.info("Logging handler established")


def set_level(app, level):
    """Changes the level of the application logger"""
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO
    app.logger.setLevel(level)
