"""Exception hierarchy shared by every maat module."""


class MaatError(Exception):
    """Base class for all errors raised by maat."""


class InvalidParameterError(MaatError, ValueError):
    """A scalar hyperparameter is outside its admissible range."""


class InvalidInputError(MaatError, ValueError):
    """Array shapes or contents are inconsistent with the operation."""


class UnsupportedInputError(InvalidInputError):
    """The input is well formed but the method cannot handle it (e.g. a non-uniform grid)."""


class ConfigurationError(MaatError, ValueError):
    """A run or fit configuration cannot be satisfied."""


class NumericError(MaatError, ArithmeticError):
    """A computation produced a non-finite value."""


class IntegrationBlowupError(NumericError):
    """RK4 integration produced a non-finite state.

    Attributes
    ----------
    step : int
        Index of the first step whose state is non-finite.
    tag : str or None
        Optional context label, e.g. ``"discovered-model-unstable"``.
    """

    def __init__(self, message, step, tag=None):
        super().__init__(message)
        self.step = step
        self.tag = tag
