"""Exception types raised across the package."""


class IpeqError(Exception):
    """Base class for all package errors."""


class InvalidModelError(IpeqError, ValueError):
    """Geometry, coefficients, or transformation violate their invariants."""


class ShapeError(IpeqError, ValueError):
    """Array dimensions do not match the model."""


class NumericError(IpeqError, ArithmeticError):
    """A linear-algebra or fitting step failed."""


class NearPoleError(IpeqError, ArithmeticError):
    """A spectral parameter lies too close to an eigenvalue."""

    def __init__(self, z, eigenvalue, distance):
        self.z = z
        self.eigenvalue = eigenvalue
        self.distance = distance
        super().__init__(
            f"z={z!r} lies within {distance:.3g} of eigenvalue {eigenvalue:.12g}"
        )


class PathError(IpeqError, ArithmeticError):
    """No admissible integration path or contour exists."""


class AnchorError(IpeqError, ValueError):
    """The asymptotic anchor point is not far enough left of the spectrum."""


class StabilityError(IpeqError, ValueError):
    """Time step violates the stability bound of an explicit scheme."""


class ContaminationError(IpeqError, ArithmeticError):
    """A residue contour encloses more than one eigenvalue cluster."""


class OrderError(IpeqError, ValueError):
    """Requested expansion order exceeds the populated terms."""


class FitError(IpeqError, ArithmeticError):
    """Least-squares fit is ill-conditioned or failed."""


class ExtractionError(IpeqError, ArithmeticError):
    """Mode extraction produced inconsistent amplitudes."""


class HorizonError(IpeqError, ValueError):
    """Simulation horizon does not cover the source support."""


class AccuracyError(IpeqError, ArithmeticError):
    """A truncated sum or quadrature cannot reach the requested accuracy."""
