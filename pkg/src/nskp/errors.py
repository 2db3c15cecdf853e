"""Exception hierarchy shared by all nskp modules."""


class NskpError(Exception):
    """Base class for all package-specific errors."""


class ContractViolationError(NskpError, ValueError):
    """An operation was called outside its documented contract."""


class CompatibilityError(NskpError, ValueError):
    """A source term is incompatible with periodic boundary conditions."""


class VacuumError(NskpError, FloatingPointError):
    """Density dropped below the vacuum floor.

    Carries the offending grid location so failed runs are diagnosable.
    """

    def __init__(self, message, location=None, rho_min=None):
        super().__init__(message)
        self.location = location
        self.rho_min = rho_min


class StepFailureError(NskpError, FloatingPointError):
    """A time step produced a non-finite or otherwise invalid state."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(NskpError, ValueError):
    """A run configuration is malformed or violates an invariant."""
