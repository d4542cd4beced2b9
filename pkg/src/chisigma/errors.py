"""Exception hierarchy for the chisigma package.

Every error raised by this package derives from :class:`ChiSigmaError`,
so callers can catch one base class. Errors that signal an invalid
argument also derive from ``ValueError`` for interoperability.
"""


class ChiSigmaError(Exception):
    """Base class for all chisigma errors."""


class DomainError(ChiSigmaError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConvergenceError(ChiSigmaError, ArithmeticError):
    """An iterative numerical routine exhausted its iteration budget."""


class DegenerateDataError(ChiSigmaError, ValueError):
    """Input data is constant, empty or zero where statistics are needed."""


class NoNoiseVoxelsError(ChiSigmaError):
    """No candidate noise level identified any background voxels."""


class ConfigError(ChiSigmaError, ValueError):
    """An estimation or simulation configuration is invalid."""


class NiftiError(ChiSigmaError):
    """A NIfTI-1 file is malformed, truncated or uses an unsupported layout."""


class SchemaError(ChiSigmaError):
    """A JSON report or ground-truth file violates the expected schema."""
