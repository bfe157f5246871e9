"""
Descriptive process exit codes, for code readability.

Every error path of the command line interface exits with its own code so
that scripts driving the experiments can tell failures apart.
"""

# Success
EXIT_OK = 0

# Click reserves 1 for aborts and 2 for bad command line usage
EXIT_ABORTED = 1
EXIT_BAD_USAGE = 2

# Library errors
EXIT_CONFIG_ERROR = 3
EXIT_INVALID_GRID = 4
EXIT_SINGULAR_OPERATOR = 5
EXIT_SHAPE_ERROR = 6
EXIT_NONCONVERGENCE = 7
EXIT_UNSUPPORTED = 8
EXIT_USAGE_ERROR = 9
EXIT_DATA_FORMAT_ERROR = 10
EXIT_IO_ERROR = 11
EXIT_IDENTITY_CHECK_FAILED = 12
EXIT_KERNEL_TOO_WIDE = 13

# Anything we did not anticipate
EXIT_INTERNAL_ERROR = 70
