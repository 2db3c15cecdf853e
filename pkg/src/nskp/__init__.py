"""Pseudo-spectral Navier-Stokes-Korteweg-Poisson toolbox.

A periodic-box simulator for a viscous capillary plasma fluid coupled to
the Poisson equation through a scaled Debye length, together with exact
dispersive-wave propagators, Strichartz-style diagnostics, and a sweep
harness that measures the quasineutral (zero Debye length) limit against
an incompressible Navier-Stokes reference.
"""

from .errors import (
    CompatibilityError,
    ConfigError,
    ContractViolationError,
    NskpError,
    StepFailureError,
    VacuumError,
)
from .spectral import (
    Grid,
    NormSpec,
    SpectralField,
    band_limited_noise,
    bilaplacian,
    curl,
    derivative_ops,
    div,
    grad,
    helmholtz_project,
    laplacian,
    norm,
    orlicz_pair,
    solve_poisson,
)

__version__ = "0.1.0"
