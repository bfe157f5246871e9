"""
Module: error_handlers

Maps every exception to a process exit code and a one line payload
{"status", "error", "message"} for the command line.
"""
import logging

from phnn import app
from phnn.common import errors, status

_HANDLERS = {}


def errorhandler(exception_class):
    """Registers the handler of an exception class"""

    def decorator(function):
        _HANDLERS[exception_class] = function
        return function

    return decorator


def handle(error: Exception) -> tuple:
    """Returns (exit_code, payload) from the handler of the closest registered class"""
    for cls in type(error).__mro__:
        if cls in _HANDLERS:
            return _HANDLERS[cls](error)
    return internal_error(error)


def _report(code: int, title: str, error, level=logging.WARNING) -> tuple:
    message = str(error)
    app.logger.log(level, message)
    return code, {"status": code, "error": title, "message": message}


######################################################################
# Error Handlers
######################################################################
@errorhandler(errors.ConfigError)
def config_error(error):
    """Handles invalid configuration with EXIT_CONFIG_ERROR"""
    return _report(status.EXIT_CONFIG_ERROR, "Config Error", error)


@errorhandler(errors.InvalidGridError)
def invalid_grid(error):
    """Handles impossible grids with EXIT_INVALID_GRID"""
    return _report(status.EXIT_INVALID_GRID, "Invalid Grid", error)


@errorhandler(errors.KernelTooWideError)
def kernel_too_wide(error):
    """Handles stencils wider than the grid with EXIT_KERNEL_TOO_WIDE"""
    return _report(status.EXIT_KERNEL_TOO_WIDE, "Kernel Too Wide", error)


@errorhandler(errors.SingularOperatorError)
def singular_operator(error):
    """Handles non-invertible operators with EXIT_SINGULAR_OPERATOR"""
    return _report(status.EXIT_SINGULAR_OPERATOR, "Singular Operator", error)


@errorhandler(errors.ShapeError)
def shape_error(error):
    """Handles mismatched arrays with EXIT_SHAPE_ERROR"""
    return _report(status.EXIT_SHAPE_ERROR, "Shape Error", error)


@errorhandler(errors.NonConvergenceError)
def nonconvergence(error):
    """Handles failed implicit solves with EXIT_NONCONVERGENCE"""
    return _report(status.EXIT_NONCONVERGENCE, "Nonconvergence", error, logging.ERROR)


@errorhandler(errors.UnsupportedError)
def unsupported(error):
    """Handles operations a model does not support with EXIT_UNSUPPORTED"""
    return _report(status.EXIT_UNSUPPORTED, "Unsupported", error)


@errorhandler(errors.UsageError)
def usage_error(error):
    """Handles operations called out of order with EXIT_USAGE_ERROR"""
    return _report(status.EXIT_USAGE_ERROR, "Usage Error", error)


@errorhandler(errors.DataFormatError)
def data_format_error(error):
    """Handles unreadable datasets and checkpoints with EXIT_DATA_FORMAT_ERROR"""
    return _report(status.EXIT_DATA_FORMAT_ERROR, "Data Format Error", error)


@errorhandler(errors.IdentityCheckFailed)
def identity_check_failed(error):
    """Handles a failed identity check with EXIT_IDENTITY_CHECK_FAILED"""
    return _report(status.EXIT_IDENTITY_CHECK_FAILED, "Identity Check Failed", error, logging.ERROR)


@errorhandler(OSError)
def io_error(error):
    """Handles file system problems with EXIT_IO_ERROR"""
    return _report(status.EXIT_IO_ERROR, "I/O Error", error, logging.ERROR)


@errorhandler(Exception)
def internal_error(error):
    """Handles anything unexpected with EXIT_INTERNAL_ERROR"""
    return _report(status.EXIT_INTERNAL_ERROR, "Internal Error", f"{type(error).__name__}: {error}", logging.ERROR)
