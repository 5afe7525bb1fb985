"""Exception hierarchy.

Each class carries the process exit code used by the command-line entry point.
"""


class HyenaRecError(Exception):
    exit_code = 1


class ConfigError(HyenaRecError, ValueError):
    """Malformed configuration or an invalid hyperparameter."""

    exit_code = 2


class ParameterError(ConfigError):
    """A function argument is outside its valid range."""


class DimensionError(ConfigError):
    """Tensor shapes that do not agree."""


class DataError(HyenaRecError, ValueError):
    """Input data that cannot be used (empty splits, bad ids, bad files)."""

    exit_code = 3


class DataFormatError(DataError):
    """A file that does not follow the expected layout."""


class NumericalError(HyenaRecError, ArithmeticError):
    """NaN or Inf produced where a finite value is required."""

    exit_code = 4
