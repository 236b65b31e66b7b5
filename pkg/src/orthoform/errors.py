"""Exception hierarchy shared by the library and the CLI."""


class FormationError(Exception):
    """Base class for every error raised by orthoform."""


class InvalidTriangleError(FormationError, ValueError):
    """Three lengths violate the triangle inequality."""


class UnrealizableError(FormationError, ValueError):
    """Distances cannot be realized by points in 3D (or the plane)."""


class DegenerateFaceError(FormationError, ValueError):
    """A face needed by a dihedral or normal computation has zero area."""


class ConstructionError(FormationError, ValueError):
    """Invalid Henneberg insertion sequence."""


class GraphMismatchError(FormationError, ValueError):
    """Two frameworks compared on different graphs."""


class ValidationError(FormationError, ValueError):
    """Scenario, formation or config failed validation."""


class DivergenceError(FormationError, RuntimeError):
    """A simulation produced non-finite or exploding positions."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientDataError(FormationError, ValueError):
    """Too few samples to fit a decay rate."""
