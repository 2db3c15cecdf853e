import numpy as np
import pytest

from nskp import (
    CompatibilityError,
    ContractViolationError,
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


def random_field(grid, rng, ncomp=1):
    shape = grid.shape if ncomp == 1 else (ncomp,) + grid.shape
    vals = rng.standard_normal(shape)
    # band-limit inside the dealias mask so products stay representable
    c = grid.fft(vals) * grid.dealias_mask
    return SpectralField.from_coeffs(grid, c)


@pytest.fixture(params=[(2, 64), (3, 24)], ids=["2d", "3d"])
def grid(request):
    dim, n = request.param
    return Grid(dim, n, box_length=2 * np.pi)


class TestGrid:
    def test_rejects_bad_sizes(self):
        with pytest.raises(ContractViolationError):
            Grid(2, 6)
        with pytest.raises(ContractViolationError):
            Grid(2, 65)
        with pytest.raises(ContractViolationError):
            Grid(4, 32)

    def test_wavenumber_layout(self, grid):
        for k in grid.wavenumbers:
            assert k.size in (grid.n, grid.n // 2 + 1)
        assert grid.k_squared.shape == grid.rshape

    def test_nyquist_outside_dealias_mask(self, grid):
        # the Nyquist frequency on every axis must be masked out
        mask = grid.dealias_mask
        assert not mask[(grid.n // 2,) + (0,) * (grid.dim - 1)]

    def test_round_trip(self, grid):
        rng = np.random.default_rng(7)
        vals = rng.standard_normal(grid.shape)
        back = grid.ifft(grid.fft(vals))
        assert np.max(np.abs(back - vals)) <= 1e-12 * np.max(np.abs(vals))


class TestDerivatives:
    def test_laplacian_single_mode(self):
        g = Grid(2, 64, box_length=2 * np.pi)
        x, y = g.coords()
        k0 = 2 * np.pi / g.box_length
        f = SpectralField.from_values(g, np.sin(k0 * x) * np.ones_like(y))
        lf = derivative_ops(f, "laplacian")
        expected = -(k0**2) * np.sin(k0 * x) * np.ones_like(y)
        assert np.max(np.abs(lf.values - expected)) < 1e-12

    def test_grad_of_constant_is_zero(self, grid):
        f = SpectralField.from_values(grid, np.ones(grid.shape))
        gf = derivative_ops(f, "grad")
        assert np.max(np.abs(gf.values)) < 1e-14

    def test_bilaplacian_equals_laplacian_twice(self, grid):
        rng = np.random.default_rng(3)
        f = random_field(grid, rng)
        # oracle: compose the laplacian with itself
        oracle = laplacian(laplacian(f))
        direct = derivative_ops(f, "bilaplacian")
        scale = np.max(np.abs(oracle.values)) + 1e-300
        assert np.max(np.abs(direct.values - oracle.values)) <= 1e-12 * scale

    def test_arity_mismatch_raises(self, grid):
        f = SpectralField.from_values(grid, np.zeros(grid.shape))
        with pytest.raises(ContractViolationError):
            derivative_ops(f, "div")
        v = SpectralField.from_values(grid, np.zeros((grid.dim,) + grid.shape))
        with pytest.raises(ContractViolationError):
            derivative_ops(v, "grad")
        with pytest.raises(ContractViolationError):
            derivative_ops(f, "hessian")

    def test_div_grad_is_laplacian(self, grid):
        rng = np.random.default_rng(5)
        f = random_field(grid, rng)
        lhs = div(grad(f))
        rhs = laplacian(f)
        scale = np.max(np.abs(rhs.values)) + 1e-300
        assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-12 * scale


class TestHelmholtz:
    def test_pure_gradient_field(self):
        g = Grid(2, 64, box_length=2 * np.pi)
        x, y = g.coords()
        phi = SpectralField.from_values(g, np.cos(x) * np.ones_like(y))
        v = grad(phi)
        grad_part = helmholtz_project(v, "gradient")
        sol_part = helmholtz_project(v, "solenoidal")
        vmax = np.max(np.abs(v.values))
        assert np.max(np.abs(grad_part.values - v.values)) <= 1e-12 * vmax
        assert np.max(np.abs(sol_part.values)) <= 1e-12 * vmax

    def test_pure_curl_field(self):
        g = Grid(2, 64, box_length=2 * np.pi)
        x, y = g.coords()
        psi = np.sin(x) * np.sin(y)
        c = g.fft(psi)
        ky, kx = g.wavenumbers[1], g.wavenumbers[0]
        v = SpectralField.from_coeffs(g, np.stack([-1j * ky * c, 1j * kx * c]))
        sol_part = helmholtz_project(v, "solenoidal")
        vmax = np.max(np.abs(v.values))
        assert np.max(np.abs(sol_part.values - v.values)) <= 1e-12 * vmax

    def test_parts_sum_and_are_orthogonal(self, grid):
        rng = np.random.default_rng(11)
        v = random_field(grid, rng, ncomp=grid.dim)
        sol = helmholtz_project(v, "solenoidal")
        gra = helmholtz_project(v, "gradient")
        vnorm = norm(v)
        assert (
            np.max(np.abs(sol.values + gra.values - v.values))
            <= 1e-12 * np.max(np.abs(v.values))
        )
        inner = np.sum(sol.values * gra.values) * grid.cell_volume
        assert abs(inner) <= 1e-12 * vnorm**2

    @pytest.mark.parametrize("seed", range(10))
    def test_idempotence_and_annihilation(self, grid, seed):
        rng = np.random.default_rng(seed)
        v = random_field(grid, rng, ncomp=grid.dim)
        vnorm = norm(v)
        sol = helmholtz_project(v, "solenoidal")
        gra = helmholtz_project(v, "gradient")
        assert norm_diff(helmholtz_project(sol, "solenoidal"), sol) <= 1e-12 * vnorm
        assert norm_diff(helmholtz_project(gra, "gradient"), gra) <= 1e-12 * vnorm
        assert norm(div(sol)) <= 1e-12 * vnorm
        c = curl(gra)
        assert norm(c) <= 1e-12 * vnorm

    def test_zero_mode_goes_to_solenoidal_part(self, grid):
        vals = np.ones((grid.dim,) + grid.shape) * 0.7
        v = SpectralField.from_values(grid, vals)
        sol = helmholtz_project(v, "solenoidal")
        gra = helmholtz_project(v, "gradient")
        assert np.max(np.abs(sol.values - vals)) < 1e-14
        assert np.max(np.abs(gra.values)) < 1e-14


def norm_diff(a, b):
    return norm(SpectralField.from_coeffs(a.grid, a.coeffs - b.coeffs))


class TestPoisson:
    def test_single_mode_inversion(self):
        g = Grid(2, 64)
        x, y = g.coords()
        k0 = 2 * np.pi / g.box_length
        eps, lam = 0.25, 0.1
        rhs = SpectralField.from_values(g, eps * np.sin(k0 * x) * np.ones_like(y))
        phi = solve_poisson(rhs, lam)
        expected = -eps * np.sin(k0 * x) / (lam**2 * k0**2) * np.ones_like(y)
        assert np.max(np.abs(phi.values - expected)) <= 1e-10 * np.max(np.abs(expected))

    def test_zero_source(self):
        g = Grid(2, 32)
        phi = solve_poisson(SpectralField.from_values(g, np.zeros(g.shape)), 0.5)
        assert np.max(np.abs(phi.values)) == 0.0

    @pytest.mark.parametrize("lam", [1.0, 0.1, 0.01])
    @pytest.mark.parametrize("seed", range(5))
    def test_residual_random_sources(self, lam, seed):
        g = Grid(2, 64)
        rng = np.random.default_rng(seed)
        f = random_field(g, rng)
        c = f.coeffs.copy()
        c[0, 0] = 0.0
        rhs = SpectralField.from_coeffs(g, c)
        phi = solve_poisson(rhs, lam)
        residual = SpectralField.from_coeffs(
            g, -lam * lam * g.k_squared * phi.coeffs - rhs.coeffs
        )
        assert (
            np.max(np.abs(residual.values))
            <= 1e-10 * np.max(np.abs(rhs.values))
        )

    def test_nonzero_mean_rejected(self):
        g = Grid(2, 32)
        rhs = SpectralField.from_values(g, np.ones(g.shape) * 1e-3)
        with pytest.raises(CompatibilityError):
            solve_poisson(rhs, 0.1)


class TestNorms:
    def test_l2_single_mode(self):
        g = Grid(2, 64)
        x, y = g.coords()
        k0 = 2 * np.pi / g.box_length
        f = SpectralField.from_values(g, np.sin(k0 * x) * np.ones_like(y))
        assert norm(f) == pytest.approx(np.sqrt(g.volume / 2), rel=1e-12)

    def test_zero_field(self):
        g = Grid(2, 32)
        f = SpectralField.from_values(g, np.zeros(g.shape))
        for spec in [NormSpec(), NormSpec(1.5, 2.0), NormSpec(-2.0, 4.0), NormSpec(0, np.inf)]:
            assert norm(f, spec) == 0.0

    def test_homogeneous_h1_single_mode(self):
        g = Grid(2, 64)
        x, y = g.coords()
        k0 = 2 * np.pi / g.box_length
        f = SpectralField.from_values(g, np.sin(k0 * x) * np.ones_like(y))
        expected = k0 * np.sqrt(g.volume / 2)
        assert norm(f, NormSpec(1.0, 2.0, homogeneous=True)) == pytest.approx(
            expected, rel=1e-12
        )

    def test_parseval(self, grid):
        rng = np.random.default_rng(23)
        f = random_field(grid, rng)
        grid_quadrature = float(np.sqrt(np.sum(f.values**2) * grid.cell_volume))
        assert norm(f) == pytest.approx(grid_quadrature, rel=1e-12)

    def test_inhomogeneous_h_s_multiplier(self):
        g = Grid(2, 64)
        x, y = g.coords()
        k0 = 2 * np.pi / g.box_length
        f = SpectralField.from_values(g, np.sin(3 * k0 * x) * np.ones_like(y))
        s = -1.7
        expected = (1 + (3 * k0) ** 2) ** (s / 2) * np.sqrt(g.volume / 2)
        assert norm(f, NormSpec(s, 2.0)) == pytest.approx(expected, rel=1e-12)

    def test_lp_constant_field(self, grid):
        f = SpectralField.from_values(grid, np.full(grid.shape, 0.5))
        got = norm(f, NormSpec(0.0, 4.0))
        assert got == pytest.approx(0.5 * grid.volume**0.25, rel=1e-12)

    def test_p_below_one_rejected(self, grid):
        f = SpectralField.from_values(grid, np.zeros(grid.shape))
        with pytest.raises(ContractViolationError):
            norm(f, NormSpec(0.0, 0.5))

    def test_bessel_smoothed_lp_matches_manual(self):
        g = Grid(2, 64)
        rng = np.random.default_rng(9)
        f = random_field(g, rng)
        s, p = -3.5, 4.0
        smoothed = g.ifft(f.coeffs * (1 + g.k_squared) ** (s / 2))
        manual = (np.sum(np.abs(smoothed) ** p) * g.cell_volume) ** (1 / p)
        assert norm(f, NormSpec(s, p)) == pytest.approx(manual, rel=1e-12)

    def test_orlicz_pair_splits_field(self):
        g = Grid(2, 32)
        vals = np.full(g.shape, 0.25)
        vals[0, 0] = 2.0
        f = SpectralField.from_values(g, vals)
        l2, lp = orlicz_pair(f, 3.0)
        small = np.where(np.abs(vals) <= 0.5, vals, 0.0)
        big = np.where(np.abs(vals) > 0.5, vals, 0.0)
        assert l2 == pytest.approx(np.sqrt(np.sum(small**2) * g.cell_volume))
        assert lp == pytest.approx((np.sum(np.abs(big) ** 3) * g.cell_volume) ** (1 / 3))


class TestBandLimitedNoise:
    def test_band_and_mean(self):
        g = Grid(2, 64)
        rng = np.random.default_rng(0)
        f = band_limited_noise(g, rng, band=(1.0, 2.0), rms=1.3)
        c = f.coeffs
        kmag = np.sqrt(g.k_squared)
        outside = (kmag < 1.0) | (kmag > 2.0)
        assert np.max(np.abs(c[outside])) < 1e-14
        assert abs(np.mean(f.values)) < 1e-13
        assert np.sqrt(np.mean(f.values**2)) == pytest.approx(1.3, rel=1e-12)

    def test_deterministic(self):
        g = Grid(2, 32)
        a = band_limited_noise(g, np.random.default_rng(42), (0.5, 3.0))
        b = band_limited_noise(g, np.random.default_rng(42), (0.5, 3.0))
        assert np.array_equal(a.values, b.values)
