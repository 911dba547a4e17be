from enum import IntEnum


class ExitCode(IntEnum):
    """Process exit codes of the command line."""
    PASS = 0
    CHECK_FAILED = 2
    NUMERICAL_FAILURE = 3
    CONFIG_ERROR = 4
