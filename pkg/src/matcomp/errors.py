"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the command layer can
translate library failures without a lookup table.
"""


class MatcompError(Exception):
    exit_code = 1


class InvalidInputError(MatcompError, ValueError):
    """Malformed or out-of-contract input (bad shape, non-finite entries, bad index)."""

    exit_code = 2


class DegenerateInputError(InvalidInputError):
    """Input is well-formed but too degenerate for the requested operation."""


class NumericFailureError(MatcompError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateDesignError(NumericFailureError):
    """The projected regression design has no usable columns."""


class DegenerateQueryError(MatcompError, ValueError):
    """A bilinear query whose projection onto the fitted representation vanishes."""

    exit_code = 4
