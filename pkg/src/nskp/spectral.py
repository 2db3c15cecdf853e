"""Periodic-box Fourier infrastructure.

Uniform real-valued grids on [0, L)^d with exact spectral differentiation,
Helmholtz-Leray projection, a screened Poisson solver, and Sobolev/Lebesgue
norms. All operations are pure functions of their inputs; fields are
immutable values from the caller's perspective, so concurrent use on
distinct fields is safe.

Coefficients are stored in the half-complex ``rfftn`` layout, normalized so
that ``coeffs[0, ..., 0]`` is the spatial mean. Conjugate symmetry (reality)
is therefore structural rather than enforced after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as _fft

from .errors import CompatibilityError, ContractViolationError

__all__ = [
    "Grid",
    "SpectralField",
    "NormSpec",
    "derivative_ops",
    "grad",
    "div",
    "laplacian",
    "bilaplacian",
    "curl",
    "helmholtz_project",
    "solve_poisson",
    "norm",
    "orlicz_pair",
    "band_limited_noise",
]


class Grid:
    """Uniform periodic grid with an rfft spectral layout.

    Parameters
    ----------
    dim : 2 or 3
    n : points per axis; must be even and >= 8 (powers of two in practice)
    box_length : side length of the periodic box

    Wavenumbers are the integer per-axis frequencies scaled by 2*pi/L.
    Nyquist modes fall outside the 2/3 dealias mask and are zeroed whenever
    a nonlinear product is truncated.
    """

    def __init__(self, dim: int, n: int, box_length: float = 16.0 * np.pi):
        if dim not in (2, 3):
            raise ContractViolationError(f"dim must be 2 or 3, got {dim}")
        n = int(n)
        if n < 8 or n % 2 != 0:
            raise ContractViolationError(f"n must be even and >= 8, got {n}")
        if box_length <= 0:
            raise ContractViolationError("box_length must be positive")
        self.dim = dim
        self.n = n
        self.box_length = float(box_length)

    # -- geometry -----------------------------------------------------------

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def rshape(self):
        """Shape of the half-complex coefficient array."""
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def spacing(self):
        return self.box_length / self.n

    @property
    def volume(self):
        return self.box_length**self.dim

    @property
    def npoints(self):
        return self.n**self.dim

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    def coords(self):
        """Coordinate arrays (one per axis), 'ij'-indexed and broadcastable."""
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True)

    # -- spectral layout ----------------------------------------------------

    @cached_property
    def wavenumbers(self):
        """Per-axis wavenumber arrays broadcastable over ``rshape``."""
        scale = 2.0 * np.pi / self.box_length
        full = np.fft.fftfreq(self.n, d=1.0 / self.n) * scale
        half = np.fft.rfftfreq(self.n, d=1.0 / self.n) * scale
        ks = []
        for axis in range(self.dim):
            k = half if axis == self.dim - 1 else full
            shape = [1] * self.dim
            shape[axis] = k.size
            ks.append(k.reshape(shape))
        return ks

    @cached_property
    def k_squared(self):
        k2 = np.zeros(self.rshape)
        for k in self.wavenumbers:
            k2 = k2 + k**2
        return k2

    @cached_property
    def dealias_mask(self):
        """Boolean 2/3-rule mask over coefficients (True = keep)."""
        cutoff = (2.0 / 3.0) * (self.n // 2) * (2.0 * np.pi / self.box_length)
        mask = np.ones(self.rshape, dtype=bool)
        for k in self.wavenumbers:
            mask &= np.abs(k) < cutoff
        return mask

    @cached_property
    def mode_weight(self):
        """Multiplicity of each stored rfft mode in the full spectrum."""
        w = np.full(self.rshape, 2.0)
        w[..., 0] = 1.0
        if self.n % 2 == 0:
            w[..., -1] = 1.0
        return w

    @property
    def k_max_dealiased(self):
        return (2.0 / 3.0) * (self.n // 2) * (2.0 * np.pi / self.box_length)

    # -- transforms ---------------------------------------------------------

    @property
    def _axes(self):
        return tuple(range(-self.dim, 0))

    def fft(self, values):
        """Grid values -> normalized spectral coefficients."""
        return _fft.rfftn(values, axes=self._axes) / self.npoints

    def ifft(self, coeffs):
        """Normalized spectral coefficients -> grid values."""
        return _fft.irfftn(coeffs * self.npoints, s=self.shape, axes=self._axes)

    def dealias(self, coeffs):
        return coeffs * self.dealias_mask

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.dim == other.dim
            and self.n == other.n
            and self.box_length == other.box_length
        )

    def __hash__(self):
        return hash((self.dim, self.n, self.box_length))

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n}, box_length={self.box_length:g})"


class SpectralField:
    """A scalar or vector field with lazily synchronized representations.

    Holds real grid samples and/or the normalized rfft coefficients; the
    missing representation is computed on first access and cached. Vector
    fields carry their components along the leading axis.
    """

    def __init__(self, grid: Grid, values=None, coeffs=None):
        if values is None and coeffs is None:
            raise ContractViolationError("need values or coeffs")
        self.grid = grid
        self._values = None if values is None else np.asarray(values, dtype=float)
        self._coeffs = None if coeffs is None else np.asarray(coeffs, dtype=complex)
        ref = self._values if self._values is not None else self._coeffs
        expected = grid.shape if self._values is not None else grid.rshape
        if ref.shape == expected:
            self.ncomp = 1
        elif ref.shape == (grid.dim,) + expected:
            self.ncomp = grid.dim
        else:
            raise ContractViolationError(
                f"field shape {ref.shape} does not match grid {expected}"
            )

    @classmethod
    def from_values(cls, grid, values):
        return cls(grid, values=values)

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        return cls(grid, coeffs=coeffs)

    @property
    def is_vector(self):
        return self.ncomp > 1

    @property
    def values(self):
        if self._values is None:
            self._values = self.grid.ifft(self._coeffs)
        return self._values

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = self.grid.fft(self._values)
        return self._coeffs

    def copy(self):
        return SpectralField(
            self.grid,
            values=None if self._values is None else self._values.copy(),
            coeffs=None if self._coeffs is None else self._coeffs.copy(),
        )

    def __repr__(self):
        kind = "vector" if self.is_vector else "scalar"
        return f"SpectralField({kind}, {self.grid!r})"


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------


def _require_scalar(f, op):
    if f.is_vector:
        raise ContractViolationError(f"{op} expects a scalar field")


def _require_vector(f, op):
    if not f.is_vector:
        raise ContractViolationError(f"{op} expects a vector field")


def grad(f: SpectralField) -> SpectralField:
    _require_scalar(f, "grad")
    g = f.grid
    c = f.coeffs
    out = np.stack([1j * k * c for k in g.wavenumbers])
    return SpectralField.from_coeffs(g, out)


def div(v: SpectralField) -> SpectralField:
    _require_vector(v, "div")
    g = v.grid
    c = v.coeffs
    out = sum(1j * g.wavenumbers[i] * c[i] for i in range(g.dim))
    return SpectralField.from_coeffs(g, out)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField.from_coeffs(f.grid, -f.grid.k_squared * f.coeffs)


def bilaplacian(f: SpectralField) -> SpectralField:
    return SpectralField.from_coeffs(f.grid, f.grid.k_squared**2 * f.coeffs)


def curl(v: SpectralField) -> SpectralField:
    """Curl of a vector field: scalar in 2D, vector in 3D."""
    _require_vector(v, "curl")
    g = v.grid
    k = g.wavenumbers
    c = v.coeffs
    if g.dim == 2:
        out = 1j * k[0] * c[1] - 1j * k[1] * c[0]
    else:
        out = np.stack(
            [
                1j * k[1] * c[2] - 1j * k[2] * c[1],
                1j * k[2] * c[0] - 1j * k[0] * c[2],
                1j * k[0] * c[1] - 1j * k[1] * c[0],
            ]
        )
    return SpectralField.from_coeffs(g, out)


_DERIVATIVE_OPS = {
    "grad": (grad, "scalar"),
    "div": (div, "vector"),
    "laplacian": (laplacian, "any"),
    "bilaplacian": (bilaplacian, "any"),
}


def derivative_ops(f: SpectralField, op: str) -> SpectralField:
    """Apply an exact spectral derivative: grad | div | laplacian | bilaplacian."""
    try:
        fn, arity = _DERIVATIVE_OPS[op]
    except KeyError:
        raise ContractViolationError(f"unknown derivative op {op!r}") from None
    if arity == "scalar":
        _require_scalar(f, op)
    elif arity == "vector":
        _require_vector(f, op)
    return fn(f)


def helmholtz_project(v: SpectralField, part: str = "solenoidal") -> SpectralField:
    """Helmholtz-Leray projection of a vector field.

    The gradient part has coefficients parallel to k, the solenoidal part
    orthogonal to k, and the two sum to ``v`` exactly. The zero mode is
    assigned to the solenoidal part (constants are divergence-free; the
    inverse Laplacian never acts on k = 0).
    """
    _require_vector(v, "helmholtz_project")
    if part not in ("solenoidal", "gradient"):
        raise ContractViolationError(f"part must be solenoidal|gradient, got {part!r}")
    g = v.grid
    c = v.coeffs
    k2 = g.k_squared.copy()
    k2[(0,) * g.dim] = 1.0  # zero mode handled explicitly below
    kdotv = sum(g.wavenumbers[i] * c[i] for i in range(g.dim))
    gradient = np.stack([g.wavenumbers[i] * kdotv / k2 for i in range(g.dim)])
    gradient[(slice(None),) + (0,) * g.dim] = 0.0
    if part == "gradient":
        return SpectralField.from_coeffs(g, gradient)
    return SpectralField.from_coeffs(g, c - gradient)


def solve_poisson(rhs: SpectralField, lam: float) -> SpectralField:
    """Solve lam^2 * Laplace(phi) = rhs on the torus, zero-mean gauge.

    The source must have (numerically) zero spatial mean; this is the
    compatibility condition for periodic boundaries.
    """
    _require_scalar(rhs, "solve_poisson")
    if lam <= 0:
        raise ContractViolationError("lam must be positive")
    g = rhs.grid
    c = rhs.coeffs
    mean = c[(0,) * g.dim].real
    if abs(mean) > 1e-10:
        raise CompatibilityError(
            f"source mean {mean:.3e} exceeds 1e-10; incompatible on the torus"
        )
    k2 = g.k_squared.copy()
    zero = (0,) * g.dim
    k2[zero] = 1.0
    phi = c / (-lam * lam * k2)
    phi[zero] = 0.0
    return SpectralField.from_coeffs(g, phi)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormSpec:
    """Which norm to take: W^{s,p} with optional homogeneity.

    p = 2 norms are evaluated exactly in spectral space. For p != 2 with
    s != 0 the field is smoothed by the Bessel potential (1+|k|^2)^{s/2}
    (or |k|^s when homogeneous) and the L^p grid quadrature of the result
    is returned; this is an approximation, adequate for trend comparisons.
    """

    sobolev_order: float = 0.0
    lebesgue_p: float = 2.0
    homogeneous: bool = False


def _spectral_multiplier(grid, spec):
    if spec.homogeneous:
        m = grid.k_squared ** (spec.sobolev_order / 2.0)
        m[(0,) * grid.dim] = 0.0  # homogeneous norms exclude the zero mode
        return m
    return (1.0 + grid.k_squared) ** (spec.sobolev_order / 2.0)


def norm(f: SpectralField, spec: NormSpec = NormSpec()) -> float:
    """Evaluate ||f|| for the requested norm; vector fields use the
    pointwise Euclidean magnitude for p != 2."""
    p = spec.lebesgue_p
    if p < 1:
        raise ContractViolationError(f"lebesgue_p must be >= 1, got {p}")
    g = f.grid

    if p == 2:
        mult = _spectral_multiplier(g, spec) if spec.sobolev_order != 0 else None
        c = f.coeffs
        power = np.abs(c) ** 2
        if f.is_vector:
            power = power.sum(axis=0)
        if mult is not None:
            power = power * mult**2
        return float(np.sqrt(g.volume * np.sum(g.mode_weight * power)))

    if spec.sobolev_order != 0.0:
        mult = _spectral_multiplier(g, spec)
        c = f.coeffs * mult
        vals = g.ifft(c)
    else:
        vals = f.values
    if f.is_vector:
        vals = np.sqrt(np.sum(vals**2, axis=0))
    if np.isinf(p):
        return float(np.max(np.abs(vals)))
    return float((np.sum(np.abs(vals) ** p) * g.cell_volume) ** (1.0 / p))


def orlicz_pair(f: SpectralField, p: float) -> tuple[float, float]:
    """Diagnostic surrogate for the clipped-Orlicz norm.

    Returns the L^2 norm of the part with |f| <= 1/2 and the L^p norm of
    the excess. No equivalence with a continuum norm is claimed.
    """
    g = f.grid
    vals = f.values
    if f.is_vector:
        vals = np.sqrt(np.sum(vals**2, axis=0))
    small = np.where(np.abs(vals) <= 0.5, vals, 0.0)
    large = np.where(np.abs(vals) > 0.5, vals, 0.0)
    l2 = float(np.sqrt(np.sum(small**2) * g.cell_volume))
    lp = float((np.sum(np.abs(large) ** p) * g.cell_volume) ** (1.0 / p))
    return l2, lp


# ---------------------------------------------------------------------------
# random fields
# ---------------------------------------------------------------------------


def band_limited_noise(grid, rng, band, ncomp=1, rms=1.0):
    """Zero-mean random field with spectral support in |k| in [band[0], band[1]].

    White noise is bandpass-filtered per mode modulus and rescaled to the
    requested root-mean-square amplitude. Deterministic for a given rng state.
    """
    lo, hi = band
    shape = grid.shape if ncomp == 1 else (ncomp,) + grid.shape
    noise = rng.standard_normal(shape)
    c = grid.fft(noise)
    kmag = np.sqrt(grid.k_squared)
    keep = (kmag >= lo) & (kmag <= hi) & grid.dealias_mask
    keep[(0,) * grid.dim] = False
    c = c * keep
    vals = grid.ifft(c)
    sq = vals**2 if ncomp == 1 else np.sum(vals**2, axis=0)
    scale = np.sqrt(np.mean(sq))
    if scale > 0:
        vals = vals * (rms / scale)
    return SpectralField.from_values(grid, vals)
