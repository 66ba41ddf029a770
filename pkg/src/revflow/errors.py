"""Exception types shared across the package."""


class RevflowError(Exception):
    """Base class for all revflow errors."""


# --- profile construction and coordinate map ---

class NonImmersed(RevflowError):
    """Profile curve has a point where f0' and h0' both vanish."""


class NegativeRadius(RevflowError):
    """Radius samples dip below zero."""


class InteriorPole(RevflowError):
    """Radius vanishes away from the domain endpoints."""


class UnsupportedTopology(RevflowError):
    """Surface class not handled (e.g. a single pole with unbounded profile)."""


class WrongTopology(RevflowError):
    """Operation applied to a curve or frame of the wrong topology."""


class PoleEvaluation(RevflowError):
    """Coordinate map evaluated exactly at a pole."""


class QuadratureFailure(RevflowError):
    """Adaptive quadrature could not meet the requested tolerance."""


class InversionFailure(RevflowError):
    """Monotone inversion of the coordinate map failed to bracket or converge."""


class TruncationTooWide(RevflowError):
    """Requested truncation maps outside what the profile supports numerically."""


# --- time stepping ---

class NewtonDivergence(RevflowError):
    """Newton iteration for an implicit step exceeded its iteration cap."""


class PositivityLoss(RevflowError):
    """A step produced non-positive or non-finite conformal factor values."""


class NearExtinction(RevflowError):
    """Conformal factor dropped below the extinction floor; the flow is ending.

    Carries the offending state in ``state`` so callers can emit a final frame.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


# --- reconstruction ---

class NotEmbeddable(RevflowError):
    """Metric violates the embeddability condition beyond rounding tolerance."""


class CrossCheckFailure(RevflowError):
    """Two independent evaluations of the same quantity disagree."""


# --- front end ---

class ConfigError(RevflowError):
    """Scenario configuration is invalid."""


class IoFailure(RevflowError):
    """Artifact file could not be written."""
