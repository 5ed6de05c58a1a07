"""Exception hierarchy shared by all cptkit modules.

Two base classes partition failures by cause so the CLI can map them to
exit codes: bad or insufficient input (`ValidationError`, exit 2) versus
numerical trouble in an otherwise well-posed problem (`NumericalError`,
exit 3).
"""


class CptkitError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(CptkitError):
    """Input, configuration, or precondition failure (CLI exit 2)."""


class NumericalError(CptkitError):
    """Numerical or fitting failure on valid input (CLI exit 3)."""


# -- validation ------------------------------------------------------------

class BadInput(ValidationError):
    """Malformed or physically inadmissible input values."""


class InsufficientPoints(ValidationError):
    """A dataset is too short for the requested analysis."""


class OutOfRange(ValidationError):
    """A value falls outside the domain it must be interpolated within."""


class EmptyOverlap(ValidationError):
    """Scans share no common frequency range."""


class AllRejected(ValidationError):
    """Every bin is empty after quality thresholding."""


class ZeroVariance(ValidationError):
    """Goodness-of-fit is undefined because all observations are equal."""


class ConfigError(ValidationError):
    """Configuration file is malformed or contains unknown keys."""


# -- numerical -------------------------------------------------------------

class NonConvergence(NumericalError):
    """Iteration ended before reaching the requested tolerance.

    Carries the last residual so callers can report how far off it was.
    """

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class NumericalInstability(NumericalError):
    """Integration produced an unphysical state (e.g. trace drift)."""


class FitDiverged(NumericalError):
    """Minimizer failed to improve on the initial guess."""


class UnboundedSensitivity(NumericalError):
    """Objective stays flat over the whole probed parameter range."""


class ModelAssumptionViolated(NumericalError):
    """A monotonicity or structural assumption failed during a search."""


class DegenerateComponents(NumericalError):
    """Two fitted components collapsed onto each other."""


class NegativeComponent(NumericalError):
    """A rate decomposition produced a non-physical negative part."""
