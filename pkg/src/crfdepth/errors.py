"""Exception hierarchy shared across the package."""


class CrfDepthError(Exception):
    """Base class for every error raised by crfdepth."""


class FormatError(CrfDepthError, ValueError):
    """Input data does not follow the expected file layout."""


class ValidationError(CrfDepthError, ValueError):
    """Arguments or configuration values are out of range."""


class SingularSystemError(CrfDepthError):
    """The CRF system has no unique minimiser.

    ``node`` names a superpixel in an undetermined component when known.
    """

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SolverError(CrfDepthError):
    """The iterative solver failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
