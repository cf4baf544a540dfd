"""
Exception hierarchy for the curved Hu-Zhang solver.

Every failure the library can raise derives from CurvedHZError so the CLI can
map it to exit code 1 with a single except clause.
"""


class CurvedHZError(Exception):
    """Base class for all library errors."""


class ChartError(CurvedHZError):
    """Unknown chart name or parameter outside an open chart's range."""


class ProjectionError(CurvedHZError):
    """Nearest-point projection did not converge."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class MeshError(CurvedHZError):
    """Invalid or unsupported mesh input."""

    def __init__(self, message, distance=None):
        super().__init__(message)
        self.distance = distance


class CurvingError(CurvedHZError):
    """Element map with nonpositive Jacobian determinant."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class QuadratureError(CurvedHZError):
    pass


class SpaceError(CurvedHZError):
    """Singular DOF Vandermonde or incompatible space configuration."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class AssemblyError(CurvedHZError):
    pass


class SolverError(CurvedHZError):
    """Factorization breakdown or residual stagnation."""

    def __init__(self, message, inertia=None, residual=None):
        super().__init__(message)
        self.inertia = inertia
        self.residual = residual


class StabilityError(CurvedHZError):
    pass


class RateError(CurvedHZError):
    pass


class ConfigError(CurvedHZError):
    pass
