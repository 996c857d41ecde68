"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3,
DataError (and plain OSError) -> 4.
"""


class SharpnessLabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SharpnessLabError):
    """Invalid experiment configuration (schema, types, unknown keys)."""


class NumericalError(SharpnessLabError):
    """Numerical failure: domain violations, overflow, non-convergence."""


class DataError(SharpnessLabError):
    """Malformed or inconsistent dataset files."""


class IdxMagicError(DataError):
    """IDX file starts with the wrong magic number."""


class IdxTruncatedError(DataError):
    """IDX file is shorter than its header promises."""


class IdxCountMismatchError(DataError):
    """Image and label files disagree on the number of examples."""
