"""Exception hierarchy.

Errors split into two families that the command line maps to distinct
exit codes: configuration/parameter problems (exit 2) and violations of a
numerical contract (exit 3).
"""


class QNLabError(Exception):
    """Base class for all errors raised by the package."""


class ParameterError(QNLabError, ValueError):
    """An argument lies outside the documented domain of an operation."""


class ConfigurationError(ParameterError):
    """A run configuration violates a stability or consistency rule."""


class HypothesisViolation(ParameterError):
    """Initial data cannot satisfy the hypotheses of the convergence theorem."""


class NumericalContractError(QNLabError):
    """A numerical pre/post-condition failed at run time."""


class IncompatibleSourceError(NumericalContractError, ValueError):
    """Source term of a periodic elliptic problem has nonzero mean."""


class SingularPointError(NumericalContractError, ValueError):
    """A kernel was evaluated at its singularity."""


class SynchronizationError(NumericalContractError):
    """Kinetic and fluid states are not at the same time level."""


class DataError(NumericalContractError):
    """A time series or table is missing entries or has invalid values."""


class AuditFailure(NumericalContractError):
    """An inequality audit failed at its frozen constant."""


class FileFormatError(DataError):
    """A binary or text file does not follow its documented layout."""
