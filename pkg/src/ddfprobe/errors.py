"""Exception types shared across the package.

The CLI maps these onto process exit codes: ``ContractError`` -> 2,
``NumericalError`` -> 3.
"""


class ContractError(ValueError):
    """A precondition or documented contract was violated by the caller."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values."""


class TrainingError(NumericalError):
    """Training diverged.

    Attributes
    ----------
    last_finite_step : int or None
        Index of the last step whose loss was finite, ``None`` if the very
        first step already diverged.
    """

    def __init__(self, message, last_finite_step=None):
        super().__init__(message)
        self.last_finite_step = last_finite_step
