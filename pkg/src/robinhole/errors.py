"""Exception types raised across the package."""


class RobinholeError(Exception):
    """Base class for all package-specific errors."""


# geometry
class InvalidOrder(RobinholeError):
    """Quadrature order below the supported minimum."""


class NonPositiveRadius(RobinholeError):
    """Radial function of a star-shaped surface is not strictly positive."""


class NonPositiveEps(RobinholeError):
    """Scaling factor must be strictly positive."""


# potential
class OriginEvaluation(RobinholeError):
    """Kernel evaluated at the origin, where it is singular."""


class TooCloseToSurface(RobinholeError):
    """Evaluation point violates the separation required by plain quadrature."""


class SurfacesOverlap(RobinholeError):
    """Scaled source and target surfaces are not separated."""


# system
class NonFiniteResidual(RobinholeError):
    """Residual evaluation produced NaN or infinity."""


class SingularJacobian(RobinholeError):
    """Linear solver failed on the Newton step."""


class NewtonDiverged(RobinholeError):
    """Newton iteration exceeded its budget or produced non-finite iterates."""


class SolvabilityWarning(UserWarning):
    """Solvability conditions failed at a solved root (solution still returned)."""


# fields
class OutsideDomain(RobinholeError):
    """Evaluation point lies outside the admissible region."""


class TooCloseToOrigin(RobinholeError):
    """Macroscopic field evaluated inside the excluded origin neighborhood."""


class InsideInnerDomain(RobinholeError):
    """Microscopic field evaluated inside the inner obstacle."""


class EnergyCancellationError(RobinholeError):
    """The additive-constant flux terms of the energy failed to cancel numerically."""


class NonPositiveValue(RobinholeError):
    """Log-log fit requires strictly positive sample values."""


class InsufficientSamples(RobinholeError):
    """Log-log fit requires at least 4 samples spanning a decade."""


# oracle
class RadiusOutOfRange(RobinholeError):
    """Annulus oracle evaluated outside [eps, 1]."""


class EpsOutOfRange(RobinholeError):
    """Annulus energy requires 0 < eps < 1."""


class NoBracketFound(RobinholeError):
    """Scalar root search found no sign change within the search cap."""


# cli
class ConfigInvalid(RobinholeError):
    """Run configuration failed validation; message names the offending field."""


class SolveFailed(RobinholeError):
    """A sweep solve failed; message embeds eps and the Newton log."""
