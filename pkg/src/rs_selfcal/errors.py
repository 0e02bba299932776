"""Exception types raised across the package."""


class RsSelfcalError(Exception):
    """Base class for all package errors."""


class CheiralityViolation(RsSelfcalError):
    """A point lies on or behind the image plane of a camera."""


class DegenerateConfiguration(RsSelfcalError):
    """Input geometry does not determine the requested quantity."""


class NoConvergence(RsSelfcalError):
    """An inner iterative solve did not reach its tolerance."""


class NoRealRoot(RsSelfcalError):
    """The row equation of the rotation-only model has no real solution."""


class SingularTransfer(RsSelfcalError):
    """The (3,3) entry of a transferred DIAC vanished."""


class NotASolution(RsSelfcalError):
    """Self-calibration residuals are not zero at the supplied point."""


class NumericalFailure(RsSelfcalError):
    """The damped normal equations could not be factorized."""


class InsufficientObservations(RsSelfcalError):
    """A camera or point has too few observations to be estimated."""


class InfeasibleProblem(InsufficientObservations):
    """The camera count fails the self-calibration counting condition."""


class InsufficientCoverage(RsSelfcalError):
    """Synthesis left a camera with too few visible points."""
