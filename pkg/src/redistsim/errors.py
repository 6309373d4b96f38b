"""Exception types shared across the package."""


class RedistError(Exception):
    """Base class for all package errors."""


class ShapeError(RedistError, ValueError):
    pass


class DomainError(RedistError, ValueError):
    pass


class ConfigError(RedistError, ValueError):
    pass


class GraphError(RedistError, ValueError):
    pass


class DuplicateEdge(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class BadIndex(GraphError, IndexError):
    pass


class NotConnected(GraphError):
    pass


class NotContiguous(GraphError):
    pass


class JoinError(RedistError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class SchemaError(RedistError, ValueError):
    pass


class GeometryError(RedistError, ValueError):
    pass


class GeometryUnavailable(GeometryError):
    pass


class SamplerCollapse(RedistError, RuntimeError):
    """All particles died. ``stage`` is the 1-based stage index."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class DuplicateName(RedistError, NameError):
    pass
