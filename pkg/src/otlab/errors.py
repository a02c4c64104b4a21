"""Exception types shared across the package.

Every failure mode that callers are expected to catch has its own class here,
so numerical code never signals structured conditions with bare ValueErrors.
"""

__all__ = [
    "OtlabError",
    "OutOfChart",
    "InvalidPair",
    "SolverDiverged",
    "ResolutionTooCoarse",
    "NotSingular",
    "NoPuncturedNeighborhood",
    "DegenerateSection",
    "EmptySection",
    "BoundaryTouching",
    "ConfigError",
    "MissingLayer",
]


class OtlabError(Exception):
    """Base class for all package-specific errors."""


class OutOfChart(OtlabError):
    """A c-exponential (or its inverse) left the declared coordinate chart."""


class InvalidPair(OtlabError):
    """A point pair violates the validity domain of a cost function."""


class SolverDiverged(OtlabError):
    """A dual solver failed to reach the requested residual tolerance."""


class ResolutionTooCoarse(OtlabError):
    """The raster resolution is too coarse for the requested measurement."""


class NotSingular(OtlabError):
    """A point expected to be singular is a differentiability point."""


class NoPuncturedNeighborhood(OtlabError):
    """A punctured ball around the query point contains no usable pixels."""


class DegenerateSection(OtlabError):
    """A potential section is too thin or empty at the current resolution."""


class EmptySection(OtlabError):
    """A potential section contains no raster pixels."""


class BoundaryTouching(OtlabError):
    """A construction requires a set strictly inside the source region."""


class ConfigError(OtlabError):
    """A scenario config file failed validation; messages carry line numbers."""


class MissingLayer(OtlabError):
    """An SVG layer was requested whose analysis did not run."""
