"""Exception hierarchy shared by all engines.

Each class carries the process exit code the command-line front end maps it to.
"""


class KPollingError(Exception):
    exit_code = 1


class InvalidParameterError(KPollingError, ValueError):
    """Rates or service limits outside their admissible range."""

    exit_code = 2


class OutOfRangeError(InvalidParameterError):
    """A perturbation path was evaluated where the realized rate is not positive."""


class InvalidPathError(InvalidParameterError):
    """A generalized rate path violates its defining constraints."""


class UnstableSystemError(InvalidParameterError):
    """The requested quantity does not exist because the system is unstable."""


class DomainError(KPollingError, ValueError):
    """Function evaluated at a pole, a singular point or outside its domain."""

    exit_code = 4


class ConstructionError(KPollingError):
    """The state space or generator could not be built as requested."""

    exit_code = 2


class NumericalError(KPollingError):
    """A linear solve or root search failed; ``residual`` holds the last residual."""

    exit_code = 3

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedDegeneracyError(NumericalError):
    """Repeated boundary roots; the root-elimination step needs simple roots."""


class AccuracyError(KPollingError):
    """A computed result failed a post-hoc validation tolerance."""

    exit_code = 4
