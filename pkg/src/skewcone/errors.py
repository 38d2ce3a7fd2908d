"""Exception types shared across modules."""


class ConfigurationError(ValueError):
    """Inputs are mutually inconsistent (grids, quadrature nodes, schemas)."""


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


class DegenerateSplittingError(RuntimeError):
    """Growth-rate gap too small to separate the dominant bundle."""


class DegenerateGeometryError(RuntimeError):
    """No positive cone aperture keeps the required intersections trivial."""


class InfeasibleParametersError(ValueError):
    """Cone constants cannot satisfy their defining inequalities."""


class InsufficientRecurrenceError(RuntimeError):
    """Too few base returns to sample an omega-limit fiber."""
