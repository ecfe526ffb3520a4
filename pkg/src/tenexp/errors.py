"""Exception types shared across the library.

The four classes map one-to-one onto the CLI exit codes: usage/argument
problems (1), malformed files (2), numerical failures (3), and inputs
that are structurally valid but carry no usable information (4).
"""


class TenexpError(Exception):
    """Base class for all library-specific errors."""


class ArgumentError(TenexpError, ValueError):
    """An argument violates a precondition (bad shape, range, or tag)."""


class FormatError(TenexpError, ValueError):
    """A file or byte stream does not match the expected format."""


class NumericalError(TenexpError, ArithmeticError):
    """A numerical routine failed (non-convergence, non-finite values)."""


class DegenerateInputError(TenexpError, ValueError):
    """Input is valid but degenerate (all-zero matrix, constant tensor)."""
