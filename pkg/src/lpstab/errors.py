"""Exception types raised by the geometry engine."""


class LpstabError(ValueError):
    """Base class for all engine errors."""


class ResolutionError(LpstabError):
    """Grid resolution or band limit is out of range."""


class GridMismatch(LpstabError):
    """Two fields or bodies live on different grids."""


class NotPositive(LpstabError):
    """The support function is not positive: origin not interior."""


class NotStrictlyConvex(LpstabError):
    """nabla^2 h + h g is not positive definite at some node."""


class TranslationLeavesOrigin(LpstabError):
    """A translation would move the origin out of the body's interior."""


class SingularMap(LpstabError):
    """A linear map is (numerically) singular."""


class NotNormalized(LpstabError):
    """The body must have the volume of the unit ball."""


class NotSymmetric(LpstabError):
    """The body must be origin-symmetric."""


class ConvergenceError(LpstabError):
    """An iterative solver failed to converge."""
