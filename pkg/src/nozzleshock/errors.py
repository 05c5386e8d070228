"""Exception hierarchy shared by all solver stages."""


class NozzleShockError(Exception):
    """Base class for every error raised by the package."""


class DomainError(NozzleShockError, ValueError):
    """A thermodynamic input lies outside its admissible range."""


class SingularConfigurationError(NozzleShockError):
    """A jump condition or linear map is singular (u = 0, M = 1, ...)."""


class GeometryError(NozzleShockError):
    """Wall angle too large, shock curve leaving the nozzle, and similar."""


class CompatibilityError(GeometryError):
    """Wall-angle profile violates Θ(0) = Θ'(0) = Θ''(0) = 0 beyond tolerance."""


class LagrangeInversionError(NozzleShockError):
    """Non-positive mass flux while inverting the Lagrange transform."""


class ExpressionError(NozzleShockError, ValueError):
    """Malformed profile expression."""


class CFLError(NozzleShockError):
    """Explicit march requested with a step violating the CFL bound."""


class MarchingError(NozzleShockError):
    """Supersonic march lost hyperbolicity (M <= 1 + margin)."""


class SolvabilityError(NozzleShockError):
    """Elliptic compatibility condition violated beyond tolerance."""

    def __init__(self, residual, tol, message=None):
        self.residual = float(residual)
        self.tol = float(tol)
        super().__init__(
            message
            or f"compatibility residual {self.residual:.3e} exceeds tolerance {self.tol:.3e}"
        )


class SolvabilityRootError(NozzleShockError):
    """No sign change of the shock-position functional inside the bracket."""

    def __init__(self, message, samples=None):
        self.samples = samples or []
        super().__init__(message)


class NonContractionError(NozzleShockError):
    """Fixed-point iteration stopped contracting."""

    def __init__(self, message, log=None):
        self.log = log or []
        super().__init__(message)


class BallViolationError(NozzleShockError):
    """Iterate left the admissible ball around the linear solution."""

    def __init__(self, message, log=None):
        self.log = log or []
        super().__init__(message)


class ConfigError(NozzleShockError, ValueError):
    """Invalid run configuration."""
