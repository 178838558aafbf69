"""Exception hierarchy shared across the package.

The CLI maps these onto exit-status categories, so raising the right class
matters more than the message wording.
"""


class EmgraphError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(EmgraphError):
    """Invalid configuration: bad grid spec, unknown variant, missing path."""


class DataError(EmgraphError):
    """Malformed input data; carries file/line context where available."""


class ShapeError(EmgraphError):
    """Operands do not conform for the named operation."""


class NumericError(EmgraphError):
    """Non-finite value where the contract requires finite arithmetic."""
