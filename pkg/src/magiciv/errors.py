"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data/config problems exit 1,
numerical failures exit 2, excess Monte Carlo exclusions exit 3.
"""


class MagicivError(Exception):
    """Base class for all package errors."""


class DataError(MagicivError):
    """Malformed or invalid input data (files, columns, cell values)."""


class ConfigError(MagicivError):
    """Invalid configuration or out-of-range arguments."""


class NumericalError(MagicivError):
    """Numerical failure: singular designs, factorization breakdown, bad curvature."""


class IdentificationError(NumericalError):
    """The relevance condition fails: no interaction carries exposure signal."""


class ExclusionError(MagicivError):
    """Too many Monte Carlo replications had to be excluded."""
