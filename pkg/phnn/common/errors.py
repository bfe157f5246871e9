"""
Module: errors

Exceptions raised by the library. The command line maps each of them to a
distinct exit code in phnn.common.error_handlers.
"""


class PhnnError(Exception):
    """Base class for all errors raised by the package"""


class ConfigError(PhnnError):
    """Used for invalid configuration values, presets or file mismatches"""


class InvalidGridError(PhnnError):
    """Used when a periodic grid cannot be constructed"""


class KernelTooWideError(PhnnError):
    """Used when a stencil does not fit on the grid it is applied to"""


class SingularOperatorError(PhnnError):
    """Used when a circulant operator cannot be inverted"""

    def __init__(self, message, kernel=None):
        super().__init__(message)
        self.kernel = kernel


class ShapeError(PhnnError):
    """Used for arrays whose shapes do not agree"""


class UsageError(PhnnError):
    """Used when operations are called out of order"""


class UnsupportedError(PhnnError):
    """Used when a model or preset does not support an operation"""


class NonConvergenceError(PhnnError):
    """Used when an implicit solve does not reach its tolerance"""

    def __init__(self, message, residual_norm=float("nan"), step=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.step = step


class DataFormatError(PhnnError):
    """Used when a dataset or checkpoint file cannot be parsed"""


class IdentityCheckFailed(PhnnError):
    """Used when the one-step error identity does not hold to tolerance"""
