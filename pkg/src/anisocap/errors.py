"""Exception hierarchy shared by all modules."""


class AnisocapError(Exception):
    """Base class for library errors."""


class GeometryError(AnisocapError, ValueError):
    pass


class DegenerateInputError(GeometryError):
    """Polygon with (near) zero area, too few vertices or self-intersections."""


class EmptyIntersectionError(GeometryError):
    pass


class UnboundedIntersectionError(GeometryError):
    pass


class RobustnessError(GeometryError):
    """A boolean operation failed even after perturbed retries.

    Retrying with inputs snapped to a coarser grid, or jittered by a few
    multiples of the merge tolerance, usually resolves it.
    """


class InvariantViolationError(GeometryError):
    pass


class InfeasibleError(AnisocapError, ValueError):
    """The set meets the region where the potential is infinite."""


class PlateauError(AnisocapError, ValueError):
    """Exact mass is not reachable by choosing a level of the potential."""

    def __init__(self, message, level, mass_interval):
        super().__init__(message)
        self.level = level
        self.mass_interval = mass_interval


class OptimizationError(AnisocapError, RuntimeError):
    pass


class ConfigError(AnisocapError, ValueError):
    pass
