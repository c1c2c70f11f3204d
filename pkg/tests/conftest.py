"""Shared fixtures and hypothesis strategies for the npslab test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from npslab.grid import (
    BoundaryData,
    BoundaryTrace,
    Grid,
    ScalarField,
    VectorField,
)
from npslab.transport import Params, make_state


@pytest.fixture
def grid12() -> Grid:
    return Grid(nx=12, ny=12)


@pytest.fixture
def grid16() -> Grid:
    return Grid(nx=16, ny=16)


@pytest.fixture
def grid_rect() -> Grid:
    """Anisotropic grid: catches x/y transpositions and h mixups."""
    return Grid(nx=20, ny=12, Lx=2.0, Ly=1.5)


@pytest.fixture
def params() -> Params:
    return Params(eps=5e-2, D1=0.8, D2=1.2, nu=0.2, K=1.0)


@pytest.fixture
def neutral_bd(grid16: Grid) -> BoundaryData:
    """Equal constant ionic data, grounded walls."""
    return BoundaryData(
        gamma1=BoundaryTrace.constant(grid16, 1.5),
        gamma2=BoundaryTrace.constant(grid16, 1.5),
        W=BoundaryTrace.constant(grid16, 0.0),
    )


@pytest.fixture
def noneq_bd(grid16: Grid) -> BoundaryData:
    """Boundary data with no constant-potential steady state."""
    return BoundaryData(
        gamma1=BoundaryTrace.from_function(grid16, lambda x, y: 1.8 - 0.6 * x),
        gamma2=BoundaryTrace.constant(grid16, 1.4),
        W=BoundaryTrace.from_function(grid16, lambda x, y: 0.4 * (2 * x - 1)),
    )


def smooth_state(grid: Grid, bd: BoundaryData, p: Params, seed: int = 0):
    """Deterministic smooth in-range state with a small recirculating flow."""
    X, Y = grid.cell_xy()
    sx, sy = np.sin(np.pi * X / grid.Lx), np.sin(np.pi * Y / grid.Ly)
    c1 = ScalarField(grid, 1.5 + 0.2 * sx * sy)
    c2 = ScalarField(grid, 1.4 + 0.1 * np.sin(2 * np.pi * X / grid.Lx) * sy)
    if seed:
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(0.02, 0.08, 2)
        c1 = ScalarField(grid, c1.values + a * np.sin(2 * np.pi * X / grid.Lx) * sy)
        c2 = ScalarField(grid, c2.values + b * sx * np.sin(2 * np.pi * Y / grid.Ly))
    xn = np.linspace(0.0, grid.Lx, grid.nx + 1)
    yn = np.linspace(0.0, grid.Ly, grid.ny + 1)
    psi = (
        0.05
        * np.sin(np.pi * xn / grid.Lx)[:, None] ** 2
        * np.sin(np.pi * yn / grid.Ly)[None, :] ** 2
    )
    u = VectorField.from_stream(grid, psi)
    return make_state(0.0, c1, c2, u, bd, p)


@pytest.fixture
def state16(grid16, noneq_bd, params):
    return smooth_state(grid16, noneq_bd, params)


# ---------------------------------------------------------------------------
# hypothesis strategies
# ---------------------------------------------------------------------------

finite_floats = st.floats(
    min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False
)

positive_floats = st.floats(
    min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False
)


@st.composite
def grids(draw, max_n: int = 24) -> Grid:
    nx = draw(st.integers(min_value=8, max_value=max_n))
    ny = draw(st.integers(min_value=8, max_value=max_n))
    Lx = draw(st.floats(min_value=0.5, max_value=3.0))
    Ly = draw(st.floats(min_value=0.5, max_value=3.0))
    return Grid(nx=nx, ny=ny, Lx=Lx, Ly=Ly)


@st.composite
def scalar_fields(draw, grid: Grid, lo: float = -1.0, hi: float = 1.0) -> ScalarField:
    vals = draw(
        st.lists(
            st.floats(min_value=lo, max_value=hi, allow_nan=False),
            min_size=grid.n_cells,
            max_size=grid.n_cells,
        )
    )
    return ScalarField(grid, np.asarray(vals).reshape((grid.nx, grid.ny), order="F"))


def seeded_scalar(grid: Grid, seed: int, lo: float = -1.0, hi: float = 1.0) -> ScalarField:
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.uniform(lo, hi, size=(grid.nx, grid.ny)))


def seeded_vector(grid: Grid, seed: int, scale: float = 1.0) -> VectorField:
    """Random interior velocity honoring the no-slip layout (wall-normal
    components on the boundary faces are zero)."""
    rng = np.random.default_rng(seed)
    ux = np.zeros((grid.nx + 1, grid.ny))
    uy = np.zeros((grid.nx, grid.ny + 1))
    ux[1:-1, :] = scale * rng.standard_normal((grid.nx - 1, grid.ny))
    uy[:, 1:-1] = scale * rng.standard_normal((grid.nx, grid.ny - 1))
    return VectorField(grid, ux, uy)
