"""Exception hierarchy shared by all morphoseek modules."""


class MorphoseekError(Exception):
    """Base class for errors raised by morphoseek."""


class DimensionError(MorphoseekError, ValueError):
    """A vector or array does not match the grid it is used with."""


class ParameterError(MorphoseekError, ValueError):
    """Kernel or relation parameters outside their valid domain."""


class NumericError(MorphoseekError, ValueError):
    """Non-finite values where finite ones are required."""


class ConfigurationError(MorphoseekError, ValueError):
    """Invalid sampling, search or run configuration."""


class ShapeError(MorphoseekError, ValueError):
    """A relation was requested for a grid shape it does not support."""


class FormatError(MorphoseekError, ValueError):
    """A serialized document is malformed.

    ``location`` names the offending key path, e.g. ``"alpha.ssh_perm"``.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)
