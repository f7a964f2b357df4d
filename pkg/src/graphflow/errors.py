"""Exception hierarchy shared by the numeric modules and the CLI."""


class GraphFlowError(Exception):
    pass


class DomainError(GraphFlowError, ValueError):
    """Chart point outside the admissible chart domain."""


class InvalidFrameError(GraphFlowError, ValueError):
    pass


class NotSpacelikeError(GraphFlowError, ValueError):
    """Operation needs a positive definite induced metric."""


class NumericError(GraphFlowError, ArithmeticError):
    pass


class DataError(GraphFlowError, ValueError):
    """Non-finite or malformed field data."""


class DimensionError(GraphFlowError, ValueError):
    pass


class SpacelikeGuardError(GraphFlowError):
    """Margin dropped below the configured guard during time stepping."""

    def __init__(self, message, min_margin=None, t=None):
        super().__init__(message)
        self.min_margin = min_margin
        self.t = t


class NumericFailure(GraphFlowError):
    pass


class CheckpointFormatError(GraphFlowError, ValueError):
    pass


class CheckpointVersionError(CheckpointFormatError):
    pass


class ConfigError(GraphFlowError, ValueError):
    pass


class InsufficientDataError(GraphFlowError, ValueError):
    pass
