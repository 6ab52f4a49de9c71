"""Exception hierarchy shared by every adagtcn module."""


class AdaGTCNError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AdaGTCNError, ValueError):
    pass


class LengthError(AdaGTCNError, ValueError):
    """A sequence is shorter than a receptive field requires."""

    def __init__(self, message: str, required: int | None = None):
        super().__init__(message)
        self.required = required


class ParameterError(AdaGTCNError, ValueError):
    pass


class ConfigError(AdaGTCNError, ValueError):
    pass


class EvaluationError(AdaGTCNError, ArithmeticError):
    """A function produced a non-finite value where a finite one is required."""


class NumericalError(AdaGTCNError, ArithmeticError):
    """Training diverged or produced non-finite gradients."""


class EmptySessionError(AdaGTCNError, ValueError):
    pass


class DegenerateWindowError(AdaGTCNError, ValueError):
    pass


class PaddingOverflowError(AdaGTCNError, ValueError):
    pass


class FormatError(AdaGTCNError, ValueError):
    """A dataset or checkpoint file does not match its declared format."""
