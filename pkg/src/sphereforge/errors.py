"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Inputs live in incompatible dimensions or have the wrong shape."""


class NonUnitError(ValueError):
    """A point that must lie on the unit sphere does not."""


class ConditioningError(ArithmeticError):
    """A matrix is too ill-conditioned to orthonormalize reliably."""


class DegenerateLPError(RuntimeError):
    """The simplex solver could not certify either feasibility or infeasibility."""


class RecordError(ValueError):
    """An artifact file is malformed or violates its invariants."""
