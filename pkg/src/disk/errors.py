"""Exception hierarchy; the CLI maps each class to an exit code."""


class DiskError(Exception):
    exit_code = 1


class InputError(DiskError, ValueError):
    """Malformed arguments, shapes, files or configuration."""

    exit_code = 2


class NumericalError(DiskError, ArithmeticError):
    """A factorization failed even after the full jitter ladder."""

    exit_code = 3


class ChainAbort(DiskError):
    """A subset chain could not make progress."""

    exit_code = 4

    def __init__(self, message, subset_id=None):
        super().__init__(message)
        self.subset_id = subset_id
