"""Grid, fields, traces, and the discrete integrals/norms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npslab.grid import (
    BoundaryData,
    BoundaryTrace,
    Grid,
    ScalarField,
    VectorField,
    dirichlet_h1_inner,
    discrete_divergence,
    integrate,
    norms,
    scalar_h1semi_sq,
    vector_l2_sq,
    vector_v_inner,
)

from conftest import seeded_scalar, seeded_vector


# ---------------------------------------------------------------------------
# Grid construction and layout
# ---------------------------------------------------------------------------


class TestGrid:
    def test_spacings_and_volume(self):
        g = Grid(nx=10, ny=20, Lx=2.0, Ly=1.0)
        assert g.hx == pytest.approx(0.2)
        assert g.hy == pytest.approx(0.05)
        assert g.cell_volume == pytest.approx(0.01)
        assert g.n_cells == 200

    def test_minimum_resolution_enforced(self):
        with pytest.raises(ValueError):
            Grid(nx=7, ny=16)
        with pytest.raises(ValueError):
            Grid(nx=16, ny=4)

    def test_nonpositive_lengths_rejected(self):
        with pytest.raises(ValueError):
            Grid(nx=8, ny=8, Lx=0.0)

    def test_cell_centers(self):
        g = Grid(nx=8, ny=8, Lx=1.0, Ly=2.0)
        assert g.xc()[0] == pytest.approx(g.hx / 2)
        assert g.yc()[-1] == pytest.approx(2.0 - g.hy / 2)
        X, Y = g.cell_xy()
        assert X.shape == (8, 8)
        assert X[3, 0] == pytest.approx(g.xc()[3])
        assert Y[0, 5] == pytest.approx(g.yc()[5])


class TestFields:
    def test_scalar_shape_checked(self, grid12):
        with pytest.raises(ValueError):
            ScalarField(grid12, np.zeros((5, 5)))

    def test_scalar_from_function(self, grid12):
        f = ScalarField.from_function(grid12, lambda x, y: x + 2 * y)
        X, Y = grid12.cell_xy()
        assert np.allclose(f.values, X + 2 * Y)

    def test_vector_shapes(self, grid_rect):
        u = VectorField.zeros(grid_rect)
        assert u.ux.shape == (grid_rect.nx + 1, grid_rect.ny)
        assert u.uy.shape == (grid_rect.nx, grid_rect.ny + 1)

    def test_nonfinite_rejected(self, grid12):
        bad = np.zeros((grid12.nx, grid12.ny))
        bad[3, 3] = np.inf
        with pytest.raises(ValueError):
            ScalarField(grid12, bad)

    def test_stream_function_field_is_divergence_free(self, grid_rect):
        g = grid_rect
        xn = np.linspace(0.0, g.Lx, g.nx + 1)
        yn = np.linspace(0.0, g.Ly, g.ny + 1)
        psi = np.sin(np.pi * xn / g.Lx)[:, None] ** 2 * np.cos(yn)[None, :] ** 2
        u = VectorField.from_stream(g, psi)
        div = discrete_divergence(u)
        assert np.max(np.abs(div.values)) < 1e-13


class TestBoundaryTrace:
    def test_constant_and_extremes(self, grid12):
        tr = BoundaryTrace.constant(grid12, 2.5)
        assert tr.min() == tr.max() == 2.5

    def test_from_function_sides(self, grid_rect):
        g = grid_rect
        tr = BoundaryTrace.from_function(g, lambda x, y: x + 10 * y)
        assert tr.left == pytest.approx(10 * g.yc())
        assert tr.right == pytest.approx(g.Lx + 10 * g.yc())
        assert tr.bottom == pytest.approx(g.xc())
        assert tr.top == pytest.approx(g.xc() + 10 * g.Ly)

    def test_mirror_swaps_walls_and_reverses(self, grid_rect):
        g = grid_rect
        tr = BoundaryTrace.from_function(g, lambda x, y: x + 10 * y)
        m = tr.mirrored_x()
        assert m.left == pytest.approx(tr.right)
        assert m.right == pytest.approx(tr.left)
        assert m.bottom == pytest.approx(tr.bottom[::-1])

    def test_boundary_data_requires_positive_gamma(self, grid12):
        ok = BoundaryTrace.constant(grid12, 1.0)
        bad = BoundaryTrace.constant(grid12, 0.0)
        W = BoundaryTrace.zero(grid12)
        with pytest.raises(ValueError):
            BoundaryData(gamma1=ok, gamma2=bad, W=W)

    def test_gamma_extremes(self, grid12):
        bd = BoundaryData(
            gamma1=BoundaryTrace.constant(grid12, 1.0),
            gamma2=BoundaryTrace.constant(grid12, 2.0),
            W=BoundaryTrace.zero(grid12),
        )
        assert bd.gamma_lo == 1.0
        assert bd.gamma_hi == 2.0


# ---------------------------------------------------------------------------
# integrate
# ---------------------------------------------------------------------------


class TestIntegrate:
    def test_constant_three(self):
        g = Grid(nx=16, ny=16)
        assert integrate(ScalarField.full(g, 3.0)) == pytest.approx(3.0)

    def test_zero(self, grid12):
        assert integrate(ScalarField.zeros(grid12)) == 0.0

    def test_sine_product_against_analytic_integral(self):
        g = Grid(nx=128, ny=128)
        f = ScalarField.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        assert integrate(f) == pytest.approx(4.0 / np.pi**2, abs=1e-3)

    @given(a=st.floats(-10, 10), b=st.floats(-10, 10), seed=st.integers(0, 2**16))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a, b, seed):
        g = Grid(nx=9, ny=11, Lx=1.3, Ly=0.7)
        f = seeded_scalar(g, seed)
        h = seeded_scalar(g, seed + 1)
        combined = ScalarField(g, a * f.values + b * h.values)
        assert integrate(combined) == pytest.approx(
            a * integrate(f) + b * integrate(h), rel=1e-12, abs=1e-12
        )


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


class TestNorms:
    def test_zero_field(self, grid12):
        n = norms(ScalarField.zeros(grid12))
        assert n["l2_sq"] == 0.0 and n["h1semi_sq"] == 0.0

    def test_linear_field_without_trace(self):
        g = Grid(nx=32, ny=32)
        f = ScalarField.from_function(g, lambda x, y: x)
        n = norms(f, trace=None)
        assert n["h1semi_sq"] == pytest.approx(1.0, abs=1e-10)

    def test_sine_product_analytic_norms(self):
        g = Grid(nx=128, ny=128)
        f = ScalarField.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        n = norms(f)  # vanishing trace: the default zero trace is exact
        assert n["l2_sq"] == pytest.approx(0.25, abs=1e-3)
        assert n["h1semi_sq"] == pytest.approx(np.pi**2 / 2, abs=1e-2)

    def test_l2_zero_iff_zero_field(self, grid12):
        f = ScalarField.zeros(grid12)
        f.values[5, 5] = 1e-30
        assert norms(f)["l2_sq"] > 0.0
        assert norms(ScalarField.zeros(grid12))["l2_sq"] == 0.0

    def test_second_order_refinement(self):
        # bubble x(1-x)y(1-y): l2_sq = (1/30)^2, h1semi_sq = 2*(1/3)*(1/30)
        exact_l2 = 1.0 / 900.0
        exact_h1 = 1.0 / 45.0
        errs_l2, errs_h1 = [], []
        for n in (32, 64, 128):
            g = Grid(nx=n, ny=n)
            f = ScalarField.from_function(g, lambda x, y: x * (1 - x) * y * (1 - y))
            nn = norms(f)
            errs_l2.append(abs(nn["l2_sq"] - exact_l2))
            errs_h1.append(abs(nn["h1semi_sq"] - exact_h1))
        assert errs_l2[0] / errs_l2[1] >= 3.5 and errs_l2[1] / errs_l2[2] >= 3.5
        assert errs_h1[0] / errs_h1[1] >= 3.5 and errs_h1[1] / errs_h1[2] >= 3.5

    def test_vector_norms_nonnegative(self, grid_rect):
        u = seeded_vector(grid_rect, 7)
        n = norms(u)
        assert n["l2_sq"] > 0.0 and n["h1semi_sq"] > 0.0

    @given(seed=st.integers(0, 2**16), scale=st.floats(0.1, 10.0))
    @settings(max_examples=25, deadline=None)
    def test_h1_quadratic_scaling(self, seed, scale):
        g = Grid(nx=10, ny=8, Lx=1.1, Ly=0.9)
        f = seeded_scalar(g, seed)
        base = scalar_h1semi_sq(f)
        scaled = scalar_h1semi_sq(ScalarField(g, scale * f.values))
        assert scaled == pytest.approx(scale**2 * base, rel=1e-12)

    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=25, deadline=None)
    def test_h1_inner_is_polarization_of_seminorm(self, seed):
        g = Grid(nx=9, ny=9)
        f = seeded_scalar(g, seed)
        h = seeded_scalar(g, seed + 13)
        cross = dirichlet_h1_inner(f, h)
        qf = scalar_h1semi_sq(ScalarField(g, f.values + h.values))
        assert qf == pytest.approx(
            scalar_h1semi_sq(f) + 2 * cross + scalar_h1semi_sq(h), rel=1e-11, abs=1e-11
        )

    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=25, deadline=None)
    def test_vector_v_inner_symmetric_positive(self, seed):
        g = Grid(nx=8, ny=10)
        u = seeded_vector(g, seed)
        v = seeded_vector(g, seed + 1)
        assert vector_v_inner(u, v) == pytest.approx(vector_v_inner(v, u), rel=1e-12)
        assert vector_v_inner(u, u) > 0.0
        assert vector_l2_sq(u) > 0.0


# ---------------------------------------------------------------------------
# discrete_divergence
# ---------------------------------------------------------------------------


class TestDivergence:
    def test_zero_field(self, grid12):
        d = discrete_divergence(VectorField.zeros(grid12))
        assert np.all(d.values == 0.0)

    def test_shear_is_divergence_free(self, grid_rect):
        g = grid_rect
        u = VectorField.from_functions(g, lambda x, y: y, lambda x, y: 0.0 * x)
        d = discrete_divergence(u)
        assert np.max(np.abs(d.values)) < 1e-13

    def test_linear_expansion_field(self, grid_rect):
        g = grid_rect
        u = VectorField.from_functions(g, lambda x, y: x, lambda x, y: y)
        d = discrete_divergence(u)
        assert np.max(np.abs(d.values - 2.0)) < 1e-12
