"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so new error conditions
should reuse one of the classes below rather than raising bare
ValueErrors.
"""


class TmdkitError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(TmdkitError):
    """An argument value lies outside its physical or mathematical domain."""


class DegenerateConditionError(TmdkitError):
    """A statistic is undefined for this input (zero herald mass, zero variance, ...)."""


class TruncationError(TmdkitError):
    """Requested photon-number cutoff cannot be supported by the detector (underdetermined)."""


class ConditioningError(TmdkitError):
    """The detector response matrix is rank deficient or the inversion collapsed."""


class NumericalError(TmdkitError):
    """An iterative numerical procedure failed to converge."""


class ConfigError(TmdkitError):
    """A run configuration document is malformed or inconsistent."""


class DataFormatError(TmdkitError):
    """An ingested data file is malformed or empty."""
