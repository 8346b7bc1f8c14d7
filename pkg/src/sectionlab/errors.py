"""Exception types shared across the package."""


class SectionLabError(Exception):
    """Base class for all sectionlab errors."""


class NonFinite(SectionLabError):
    """A map produced a non-finite value at a probe point."""


class OutsideRadius(SectionLabError):
    """Power-series argument lies outside the estimated convergence radius."""


class OutsideOverlap(SectionLabError):
    """A point (or tangent vector) is not in the required chart overlap."""


class OutsideChart(SectionLabError):
    """A section leaves a normal-chart domain; carries the offending base index."""

    def __init__(self, t, message=""):
        self.t = t
        super().__init__(message or f"section leaves the chart domain at base index {t}")


class CoverageFailure(SectionLabError):
    """Shrunken coordinate neighborhoods no longer cover the total space."""

    def __init__(self, witness, message=""):
        self.witness = witness
        super().__init__(message or f"uncovered fiber point: {witness}")


class NoBumpCoverage(SectionLabError):
    """All bump functions vanish at a point (broken bump system)."""


class ChartBreak(SectionLabError):
    """Consecutive polyline points share no chart."""


class DomainEscape(SectionLabError):
    """A trajectory left the display polydisk, i.e. the data is outside the
    solvability domain of the exponential map."""


class NoConvergence(SectionLabError):
    """A fixed-point iteration failed to converge within its budget."""


class BoundViolation(SectionLabError):
    """A certified inequality failed; carries a witness."""

    def __init__(self, witness, message=""):
        self.witness = witness
        super().__init__(message or f"bound violated at {witness}")


class DegenerateFrame(SectionLabError):
    """A frame loses pointwise linear independence; carries the base index."""

    def __init__(self, t, message=""):
        self.t = t
        super().__init__(message or f"frame degenerate at base index {t}")


class PreconditionViolation(SectionLabError):
    """An operation's stated precondition failed a sampling check."""


class ConfigError(SectionLabError):
    """Malformed run configuration."""


class FixtureError(SectionLabError):
    """Unknown or invalid fixture name."""
