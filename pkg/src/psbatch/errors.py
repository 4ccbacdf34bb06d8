"""Exception and warning types shared across the package.

Everything numerical in this package either returns a finite, checked value
or raises one of the exceptions below.  Soft conditions (truncation depth,
quadrature tolerance) use warnings instead so callers can escalate with
``warnings.simplefilter`` when they need hard guarantees.
"""


class PsbatchError(Exception):
    """Base class for all package-specific errors."""


class StabilityViolation(PsbatchError):
    """Parameters violate the stability condition 1 - rho - q > 0."""


class DomainError(PsbatchError):
    """Argument outside the mathematical domain of the requested quantity."""


class PoleError(PsbatchError):
    """Evaluation requested exactly at (or numerically on top of) a pole."""


class RadiusError(PsbatchError):
    """Series/branch argument beyond its radius of convergence."""


class ConvergenceError(PsbatchError):
    """An iterative scheme failed to converge within its iteration budget."""


class NonFiniteIntegrand(PsbatchError):
    """Integrand returned nan or inf at a quadrature node."""


class SingularDiagonal(PsbatchError):
    """Triangular system has a vanishing (or non-finite) diagonal entry."""


class InversionUnstable(PsbatchError):
    """Consecutive-order Laplace inversion estimates disagree beyond slack."""


class ToleranceNotMet(UserWarning):
    """Quadrature returned its best estimate without reaching tolerance."""


class TruncationWarning(UserWarning):
    """State-space truncation may be affecting the reported values."""
