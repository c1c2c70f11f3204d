"""Exception types shared across the package."""


class NpslabError(Exception):
    """Base class for all package errors."""


class ConfigError(NpslabError):
    """Invalid or inconsistent configuration input."""


class NonConvergence(NpslabError):
    """A linear or nonlinear solve missed its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class LinearSolveFailure(NpslabError):
    """Sparse factorization or triangular solve failed."""


class MaxPrincipleViolation(NpslabError):
    """A concentration left the discrete maximum-principle envelope.

    Signals a scheme bug, a non-solenoidal advecting velocity, or a time
    step too large for the strict envelope guarantee.
    """


class NonpositiveConcentration(NpslabError):
    """Concentrations must stay positive for the requested operation."""


class FormatError(NpslabError):
    """Checkpoint or CSV file failed a format check."""


class GummelDivergence(NpslabError):
    """Steady fixed-point iteration increased its residual repeatedly."""

    def __init__(self, message, last_iterate=None, residuals=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residuals = residuals or []


class NewtonStall(NpslabError):
    """Damped Newton hit the step-size floor without sufficient decrease."""


class RankDeficient(NpslabError):
    """A tangent mode collapsed during orthonormalization."""

    def __init__(self, message, mode_index=None):
        super().__init__(message)
        self.mode_index = mode_index


class BundleRankDeficient(NpslabError):
    """The whole tangent bundle lost rank during a dimension run."""


class IdenticalStates(NpslabError):
    """Two states expected to differ are equal (difference norm zero)."""


class InsufficientWindow(NpslabError):
    """A trajectory does not cover the requested averaging window."""


class RetryWithSmallerDt(NpslabError):
    """The advective CFL bound was exceeded for the attempted step."""

    def __init__(self, message, dt_suggested=None):
        super().__init__(message)
        self.dt_suggested = dt_suggested
