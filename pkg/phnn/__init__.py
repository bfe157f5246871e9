"""
Package: phnn
Pseudo-Hamiltonian neural networks for one dimensional periodic PDEs

This module creates the Flask app that carries the configuration, the
logger and the command line, and sets up the logging
"""
from flask import Flask
from phnn import config
from phnn.common import log_handlers

# Create Flask application
app = Flask(__name__)
app.config.from_object(config)

# Dependencies require we import the commands AFTER the Flask app is created
# pylint: disable=wrong-import-position
from phnn.common import error_handlers, cli_commands  # noqa: F401, E402

log_handlers.init_logging(app, app.config["LOG_LEVEL"])

app.logger.info(70 * "*")
app.logger.info("  P H N N   R E A D Y  ".center(70, "*"))
app.logger.info(70 * "*")
