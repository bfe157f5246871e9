"""
Test cases for the mapping of exceptions to exit codes

"""
import logging
import unittest

from phnn import app
from phnn.common import errors, status
from phnn.common.error_handlers import handle


######################################################################
#  E R R O R   H A N D L E R   T E S T   C A S E S
######################################################################
class TestErrorHandlers(unittest.TestCase):
    """Test Cases for handle"""

    @classmethod
    def setUpClass(cls):
        """This runs once before the entire test suite"""
        app.logger.setLevel(logging.CRITICAL)

    def test_library_errors(self):
        """It should give every library error its own exit code"""
        expected = {
            errors.ConfigError: status.EXIT_CONFIG_ERROR,
            errors.InvalidGridError: status.EXIT_INVALID_GRID,
            errors.KernelTooWideError: status.EXIT_KERNEL_TOO_WIDE,
            errors.SingularOperatorError: status.EXIT_SINGULAR_OPERATOR,
            errors.ShapeError: status.EXIT_SHAPE_ERROR,
            errors.NonConvergenceError: status.EXIT_NONCONVERGENCE,
            errors.UnsupportedError: status.EXIT_UNSUPPORTED,
            errors.UsageError: status.EXIT_USAGE_ERROR,
            errors.DataFormatError: status.EXIT_DATA_FORMAT_ERROR,
            errors.IdentityCheckFailed: status.EXIT_IDENTITY_CHECK_FAILED,
        }
        for cls, code in expected.items():
            result, payload = handle(cls("went wrong"))
            self.assertEqual(result, code, cls.__name__)
            self.assertEqual(payload["status"], code)
            self.assertEqual(payload["message"], "went wrong")
            self.assertIn("error", payload)
        self.assertEqual(len(set(expected.values())), len(expected))

    def test_payload(self):
        """It should title the payload after the error"""
        code, payload = handle(errors.ConfigError("Unknown system 'heat'"))
        self.assertEqual(code, 3)
        self.assertEqual(payload, {"status": 3, "error": "Config Error", "message": "Unknown system 'heat'"})

    def test_os_errors(self):
        """It should map file system problems to the I/O exit code"""
        code, payload = handle(FileNotFoundError(2, "No such file", "missing.csv"))
        self.assertEqual(code, status.EXIT_IO_ERROR)
        self.assertEqual(payload["error"], "I/O Error")
        self.assertEqual(handle(PermissionError("denied"))[0], 11)

    def test_unexpected_errors(self):
        """It should report anything else as an internal error with its type"""
        code, payload = handle(ValueError("bad value"))
        self.assertEqual(code, status.EXIT_INTERNAL_ERROR)
        self.assertEqual(payload["error"], "Internal Error")
        self.assertEqual(payload["message"], "ValueError: bad value")

    def test_subclasses(self):
        """It should use the handler of the closest registered base class"""

        class LateConfigError(errors.ConfigError):
            """A ConfigError nobody registered"""

        self.assertEqual(handle(LateConfigError("late"))[0], status.EXIT_CONFIG_ERROR)
        self.assertEqual(handle(errors.PhnnError("base"))[0], status.EXIT_INTERNAL_ERROR)

    def test_extra_fields(self):
        """It should keep the details carried by numerical errors"""
        error = errors.NonConvergenceError("no fixed point", residual_norm=0.5, step=3)
        self.assertEqual(handle(error)[0], status.EXIT_NONCONVERGENCE)
        self.assertEqual((error.residual_norm, error.step), (0.5, 3))
        self.assertEqual(errors.SingularOperatorError("singular", kernel=[1, 0]).kernel, [1, 0])

    def test_exit_codes(self):
        """It should list distinct exit codes in increasing order"""
        codes = [value for name, value in vars(status).items() if name.startswith("EXIT_")]
        self.assertEqual(codes, sorted(codes))
        self.assertEqual(len(set(codes)), len(codes))
