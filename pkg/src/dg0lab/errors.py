"""Exception hierarchy shared by all modules."""


class Dg0Error(Exception):
    """Base class for library errors."""


class InvalidArgument(Dg0Error, ValueError):
    pass


class InvalidMesh(Dg0Error, ValueError):
    pass


class InvalidField(Dg0Error, ValueError):
    pass


class InsufficientData(Dg0Error, ValueError):
    pass


class NumericFailure(Dg0Error, RuntimeError):
    """A linear solve did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResourceLimit(Dg0Error, RuntimeError):
    pass


class ConfigError(Dg0Error, ValueError):
    pass
