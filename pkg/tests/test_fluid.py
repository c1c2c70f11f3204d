"""Stokes saddle step: exact incompressibility, gradient-force
annihilation, eigenmode decay, and the electric body forces."""

import numpy as np
import pytest
import scipy.linalg

from npslab.elliptic import harmonic_extension
from npslab.grid import (
    BoundaryTrace,
    Grid,
    ScalarField,
    VectorField,
    discrete_divergence,
    vector_l2_sq,
    vector_v_inner,
)
from npslab.fluid import (
    StokesWorkspace,
    electric_force,
    n_velocity_dofs,
    pack_velocity,
    species_electric_force,
    steady_stokes,
    stokes_eigenpairs,
    stokes_step,
    unpack_velocity,
    velocity_divergence,
    velocity_gradient,
    velocity_laplacian,
)

from conftest import seeded_vector


class TestPackUnpack:
    def test_round_trip_preserves_interior_faces(self, grid_rect):
        u = seeded_vector(grid_rect, 3)
        v = unpack_velocity(pack_velocity(u), grid_rect)
        assert np.array_equal(v.ux, u.ux)
        assert np.array_equal(v.uy, u.uy)

    def test_dof_count(self, grid_rect):
        nux, nuy = n_velocity_dofs(grid_rect)
        assert nux == (grid_rect.nx - 1) * grid_rect.ny
        assert nuy == grid_rect.nx * (grid_rect.ny - 1)
        assert pack_velocity(seeded_vector(grid_rect, 1)).size == nux + nuy

    def test_unpack_zeroes_wall_faces(self, grid12):
        vec = np.ones(sum(n_velocity_dofs(grid12)))
        u = unpack_velocity(vec, grid12)
        assert np.all(u.ux[0, :] == 0) and np.all(u.ux[-1, :] == 0)
        assert np.all(u.uy[:, 0] == 0) and np.all(u.uy[:, -1] == 0)


class TestVelocityOperators:
    def test_laplacian_symmetric(self, grid_rect):
        L = velocity_laplacian(grid_rect)
        assert abs(L - L.T).max() == 0.0

    def test_laplacian_quadratic_form_matches_v_inner(self, grid_rect):
        """The matrix form v^T L v (times cell volume) must agree exactly
        with the no-slip H^1 inner product used by the diagnostics."""
        L = velocity_laplacian(grid_rect)
        for seed in (0, 5):
            u = seeded_vector(grid_rect, seed)
            v = seeded_vector(grid_rect, seed + 11)
            pu, pv = pack_velocity(u), pack_velocity(v)
            lhs = float(pu @ (L @ pv)) * grid_rect.cell_volume
            assert lhs == pytest.approx(vector_v_inner(u, v), rel=1e-12)

    def test_laplacian_positive_definite(self, grid12):
        L = velocity_laplacian(grid12).toarray()
        lam_min = float(np.min(scipy.linalg.eigvalsh(L)))
        assert lam_min > 0.0

    def test_divergence_is_negative_gradient_transpose(self, grid_rect):
        G = velocity_gradient(grid_rect)
        D = velocity_divergence(grid_rect)
        assert abs(D + G.T).max() == 0.0

    def test_gradient_annihilates_constants(self, grid_rect):
        G = velocity_gradient(grid_rect)
        assert np.max(np.abs(G @ np.ones(grid_rect.n_cells))) == 0.0

    def test_divergence_matrix_matches_field_divergence(self, grid_rect):
        u = seeded_vector(grid_rect, 7)
        D = velocity_divergence(grid_rect)
        via_matrix = D @ pack_velocity(u)
        via_field = discrete_divergence(u).values.ravel(order="F")
        assert np.max(np.abs(via_matrix - via_field)) < 1e-13


class TestStokesStep:
    def test_zero_stays_zero(self, grid16):
        ws = StokesWorkspace(grid16, nu=0.3)
        un, _ = stokes_step(VectorField.zeros(grid16), VectorField.zeros(grid16), 0.1, ws)
        assert vector_l2_sq(un) == 0.0

    def test_step_is_divergence_free(self, grid_rect):
        ws = StokesWorkspace(grid_rect, nu=0.1)
        u = seeded_vector(grid_rect, 2)
        f = seeded_vector(grid_rect, 8, scale=3.0)
        un, _ = stokes_step(u, f, 5e-2, ws)
        assert np.max(np.abs(discrete_divergence(un).values)) < 1e-10

    def test_gradient_force_produces_no_flow(self, grid16):
        """A force that is the discrete gradient of a cell field is absorbed
        entirely by the pressure."""
        ws = StokesWorkspace(grid16, nu=0.2)
        rng = np.random.default_rng(12)
        q = rng.standard_normal(grid16.n_cells)
        f = unpack_velocity(velocity_gradient(grid16) @ q, grid16)
        un, _ = stokes_step(VectorField.zeros(grid16), f, 0.05, ws)
        assert np.sqrt(vector_l2_sq(un)) < 1e-12 * float(np.linalg.norm(q))

    def test_eigenmode_decays_by_resolvent_factor(self, grid16):
        nu, dt = 0.2, 1e-2
        lam, modes = stokes_eigenpairs(grid16, k=1)
        ws = StokesWorkspace(grid16, nu=nu)
        u = modes[0]
        for _ in range(3):
            un, _ = stokes_step(u, VectorField.zeros(grid16), dt, ws)
            ratio = np.sqrt(vector_l2_sq(un) / vector_l2_sq(u))
            assert ratio == pytest.approx(1.0 / (1.0 + dt * nu * lam[0]), rel=1e-8)
            u = un

    def test_unforced_energy_decays(self, grid_rect):
        ws = StokesWorkspace(grid_rect, nu=0.15)
        u = seeded_vector(grid_rect, 6)
        # start from a solenoidal field: one projection step with f = 0
        u, _ = stokes_step(u, VectorField.zeros(grid_rect), 1e-3, ws)
        e = vector_l2_sq(u)
        for _ in range(5):
            u, _ = stokes_step(u, VectorField.zeros(grid_rect), 2e-2, ws)
            en = vector_l2_sq(u)
            assert en <= e
            e = en

    def test_linearity_in_force(self, grid12):
        ws = StokesWorkspace(grid12, nu=0.4)
        f1 = seeded_vector(grid12, 1)
        f2 = seeded_vector(grid12, 2)
        z = VectorField.zeros(grid12)
        a, _ = stokes_step(z, f1, 0.03, ws)
        b, _ = stokes_step(z, f2, 0.03, ws)
        fsum = VectorField(grid12, f1.ux + f2.ux, f1.uy + f2.uy)
        c, _ = stokes_step(z, fsum, 0.03, ws)
        assert np.max(np.abs(c.ux - a.ux - b.ux)) < 1e-11
        assert np.max(np.abs(c.uy - a.uy - b.uy)) < 1e-11

    def test_nonpositive_dt_rejected(self, grid12):
        ws = StokesWorkspace(grid12, nu=0.4)
        z = VectorField.zeros(grid12)
        with pytest.raises(ValueError):
            stokes_step(z, z, 0.0, ws)

    def test_nonpositive_viscosity_rejected(self, grid12):
        with pytest.raises(ValueError):
            StokesWorkspace(grid12, nu=0.0)


class TestSteadyStokes:
    def test_momentum_residual_vanishes(self, grid_rect):
        nu = 0.25
        ws = StokesWorkspace(grid_rect, nu=nu)
        f = seeded_vector(grid_rect, 4, scale=2.0)
        u, pr = steady_stokes(f, ws)
        L = velocity_laplacian(grid_rect)
        G = velocity_gradient(grid_rect)
        res = nu * (L @ pack_velocity(u)) + G @ pr.values.ravel(order="F") - pack_velocity(f)
        assert np.max(np.abs(res)) < 1e-10 * max(1.0, np.max(np.abs(pack_velocity(f))))
        assert np.max(np.abs(discrete_divergence(u).values)) < 1e-10

    def test_scales_inversely_with_viscosity(self, grid12):
        f = seeded_vector(grid12, 4)
        u1, _ = steady_stokes(f, StokesWorkspace(grid12, nu=0.1))
        u2, _ = steady_stokes(f, StokesWorkspace(grid12, nu=0.2))
        assert np.max(np.abs(u1.ux - 2.0 * u2.ux)) < 1e-10


class TestElectricForce:
    def test_zero_charge_gives_zero_force(self, grid16):
        phi = ScalarField.from_function(grid16, lambda x, y: np.sin(3 * x) * y)
        f = electric_force(ScalarField.zeros(grid16), phi, K=3.0)
        assert vector_l2_sq(f) == 0.0

    def test_constant_potential_gives_zero_force(self, grid16):
        rho = ScalarField.from_function(grid16, lambda x, y: x - y)
        f = electric_force(rho, ScalarField.full(grid16, 4.2), K=3.0)
        assert vector_l2_sq(f) == 0.0

    def test_unit_charge_linear_potential(self, grid16):
        rho = ScalarField.full(grid16, 1.0)
        phi = ScalarField.from_function(grid16, lambda x, y: x)
        f = electric_force(rho, phi, K=2.0)
        assert np.max(np.abs(f.ux[1:-1, :] + 2.0)) < 1e-12
        assert np.max(np.abs(f.uy[:, 1:-1])) < 1e-12

    def test_species_force_at_boltzmann_state_is_exact_gradient(self, grid16):
        """With c_i = Z_i e^{-z_i phi} on any potential, the log-mean force
        equals a discrete gradient, so the saddle step keeps u = 0."""
        W = BoundaryTrace.from_function(grid16, lambda x, y: 0.4 * (x - y))
        phi = harmonic_extension(grid16, W)
        c1 = ScalarField(grid16, 0.9 * np.exp(-phi.values))
        c2 = ScalarField(grid16, 1.3 * np.exp(+phi.values))
        f = species_electric_force(c1, c2, phi, K=2.5)
        ws = StokesWorkspace(grid16, nu=0.1)
        un, _ = stokes_step(VectorField.zeros(grid16), f, 0.1, ws)
        assert np.sqrt(vector_l2_sq(un)) < 1e-12

    def test_species_force_matches_arithmetic_force_on_smooth_fields(self, grid16):
        """Log-mean and arithmetic-mean face densities differ at O(h^2) on
        smooth positive fields."""
        c1 = ScalarField.from_function(grid16, lambda x, y: 1.5 + 0.3 * np.sin(2 * x + y))
        c2 = ScalarField.from_function(grid16, lambda x, y: 1.2 + 0.2 * np.cos(x - y))
        phi = ScalarField.from_function(grid16, lambda x, y: 0.5 * x * y)
        rho = ScalarField(grid16, c1.values - c2.values)
        fa = electric_force(rho, phi, K=1.0)
        fs = species_electric_force(c1, c2, phi, K=1.0)
        scale = np.max(np.abs(fa.ux)) + np.max(np.abs(fa.uy))
        diff = np.max(np.abs(fa.ux - fs.ux)) + np.max(np.abs(fa.uy - fs.uy))
        assert diff < 1e-2 * scale


class TestStokesEigenpairs:
    def test_matches_dense_nullspace_reduction(self, grid12):
        """Independent oracle: restrict the velocity Laplacian to an
        orthonormal basis of ker(div) computed densely, then compare
        spectra."""
        L = velocity_laplacian(grid12).toarray()
        D = velocity_divergence(grid12).toarray()
        Z = scipy.linalg.null_space(D)
        dense = np.sort(scipy.linalg.eigvalsh(Z.T @ L @ Z))
        lam, _ = stokes_eigenpairs(grid12, k=5)
        assert np.allclose(lam, dense[:5], rtol=1e-8)

    def test_eigenvalues_sorted_positive_and_above_scalar_spectrum(self, grid16):
        lam, _ = stokes_eigenpairs(grid16, k=4)
        assert np.all(np.diff(lam) >= -1e-9)
        assert lam[0] > 0.0
        # no-slip + solenoidal is more constrained than scalar Dirichlet
        scalar_lowest = (2.0 - 2.0 * np.cos(np.pi * grid16.hx)) / grid16.hx**2 * 2.0
        assert lam[0] > scalar_lowest

    def test_eigenfields_are_divergence_free_rayleigh_consistent(self, grid12):
        lam, modes = stokes_eigenpairs(grid12, k=3)
        for lam_j, v in zip(lam, modes):
            assert np.max(np.abs(discrete_divergence(v).values)) < 1e-8
            rayleigh = vector_v_inner(v, v) / vector_l2_sq(v)
            assert rayleigh == pytest.approx(lam_j, rel=1e-8)

    def test_k_out_of_range_rejected(self, grid12):
        with pytest.raises(ValueError):
            stokes_eigenpairs(grid12, k=0)
        with pytest.raises(ValueError):
            stokes_eigenpairs(grid12, k=4000)
