"""Exception types raised across the package."""


class JointDispError(Exception):
    """Base class for all package errors."""


class InvalidArgument(JointDispError, ValueError):
    pass


class DomainError(JointDispError, ValueError):
    """Evaluation point lies outside the domain of a function."""


class NumericError(JointDispError, ArithmeticError):
    """A non-finite value appeared where a finite one was required."""


class FitError(JointDispError, RuntimeError):
    pass


class ParseError(JointDispError, ValueError):
    """Malformed input file; the message carries file name and line number."""
