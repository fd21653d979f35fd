"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration errors -> 2,
data/input errors -> 3, numerical errors -> 4.
"""


class NnsigError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NnsigError):
    """Invalid configuration: bad dimensions, out-of-range parameters, malformed config files."""


class InputError(NnsigError):
    """Invalid runtime input: dimension mismatches, empty data."""


class IngestionError(InputError):
    """CSV ingestion failure: non-numeric cells, missing columns, degenerate columns."""


class FormatError(InputError):
    """Model file is corrupt, truncated, or of an unknown version."""


class NumericalError(NnsigError):
    """Numerical failure, e.g. a covariance matrix that cannot be factorized."""


class DivergenceError(NumericalError):
    """Training produced NaN or Inf loss."""
