"""Exception types shared across the package."""


class RobustCodecError(Exception):
    """Base class for all package errors."""


class DimensionError(RobustCodecError, ValueError):
    pass


class UsageError(RobustCodecError, RuntimeError):
    pass


class ConfigError(RobustCodecError, ValueError):
    pass


class DomainError(RobustCodecError, ValueError):
    pass


class RangeError(RobustCodecError, ValueError):
    pass


class FormatError(RobustCodecError, ValueError):
    """Malformed input file; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(RobustCodecError, ArithmeticError):
    """Non-finite value encountered; ``step`` names where it happened."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step
