"""Staggered rectangular grid, discrete fields, and discrete norms.

Layout conventions used everywhere in the package:

* scalar (cell-centered) arrays have shape ``(nx, ny)`` with ``[i, j]`` at
  ``((i + 1/2) hx, (j + 1/2) hy)``;
* ``ux`` lives on vertical faces, shape ``(nx+1, ny)``, position
  ``(i hx, (j + 1/2) hy)``; faces ``i = 0`` and ``i = nx`` lie on the walls;
* ``uy`` lives on horizontal faces, shape ``(nx, ny+1)``;
* flattening for linear algebra and serialization is x-fastest, i.e.
  ``ravel(order="F")`` on these shapes.

Dirichlet boundary values are carried per boundary face by
:class:`BoundaryTrace`.  Boundary gradients of cell-centered fields use the
one-sided difference over the half spacing ``h/2`` between the first cell
center and the wall, which is exactly the quadratic form of the ghost-cell
5-point Laplacian used by the elliptic module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform MAC grid on the rectangle [0, Lx] x [0, Ly]."""

    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid must have nx, ny >= 8, got {self.nx} x {self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("domain lengths must be positive")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def xc(self) -> np.ndarray:
        """Cell-center x coordinates, shape (nx,)."""
        return (np.arange(self.nx) + 0.5) * self.hx

    def yc(self) -> np.ndarray:
        """Cell-center y coordinates, shape (ny,)."""
        return (np.arange(self.ny) + 0.5) * self.hy

    def cell_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of cell centers, both shaped (nx, ny)."""
        return np.meshgrid(self.xc(), self.yc(), indexing="ij")

    def xface_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Vertical-face centers (ux positions), both shaped (nx+1, ny)."""
        x = np.arange(self.nx + 1) * self.hx
        return np.meshgrid(x, self.yc(), indexing="ij")

    def yface_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Horizontal-face centers (uy positions), both shaped (nx, ny+1)."""
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(self.xc(), y, indexing="ij")


def _as_values(grid: Grid, values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.shape != (grid.nx, grid.ny):
        raise ValueError(f"expected shape {(grid.nx, grid.ny)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("field values must be finite")
    return a


@dataclass
class ScalarField:
    """Cell-centered field; treat instances as immutable once built."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_values(self.grid, self.values)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    @classmethod
    def full(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full((grid.nx, grid.ny), float(value)))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "ScalarField":
        X, Y = grid.cell_xy()
        return cls(grid, np.broadcast_to(np.asarray(f(X, Y), dtype=float), X.shape).copy())

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """MAC face-centered velocity field."""

    grid: Grid
    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        g = self.grid
        self.ux = np.asarray(self.ux, dtype=float)
        self.uy = np.asarray(self.uy, dtype=float)
        if self.ux.shape != (g.nx + 1, g.ny):
            raise ValueError(f"ux must have shape {(g.nx + 1, g.ny)}, got {self.ux.shape}")
        if self.uy.shape != (g.nx, g.ny + 1):
            raise ValueError(f"uy must have shape {(g.nx, g.ny + 1)}, got {self.uy.shape}")
        if not (np.all(np.isfinite(self.ux)) and np.all(np.isfinite(self.uy))):
            raise ValueError("velocity values must be finite")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))

    @classmethod
    def from_functions(cls, grid: Grid, fx, fy) -> "VectorField":
        XF, YF = grid.xface_xy()
        XG, YG = grid.yface_xy()
        ux = np.broadcast_to(np.asarray(fx(XF, YF), dtype=float), XF.shape).copy()
        uy = np.broadcast_to(np.asarray(fy(XG, YG), dtype=float), XG.shape).copy()
        return cls(grid, ux, uy)

    @classmethod
    def from_stream(cls, grid: Grid, psi: np.ndarray) -> "VectorField":
        """Exactly divergence-free field from a node-based stream function.

        ``psi`` has shape (nx+1, ny+1) (cell corners).  A constant psi on the
        boundary nodes makes all wall-normal faces zero.
        """
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (grid.nx + 1, grid.ny + 1):
            raise ValueError(f"psi must have shape {(grid.nx + 1, grid.ny + 1)}")
        ux = (psi[:, 1:] - psi[:, :-1]) / grid.hy
        uy = -(psi[1:, :] - psi[:-1, :]) / grid.hx
        return cls(grid, ux, uy)

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.ux.copy(), self.uy.copy())


@dataclass(frozen=True)
class BoundaryTrace:
    """One value per boundary face: left/right indexed by j, bottom/top by i."""

    left: np.ndarray
    right: np.ndarray
    bottom: np.ndarray
    top: np.ndarray

    def __post_init__(self):
        for name in ("left", "right", "bottom", "top"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.left.shape != self.right.shape or self.bottom.shape != self.top.shape:
            raise ValueError("opposite sides must have equal face counts")

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "BoundaryTrace":
        v = float(value)
        return cls(np.full(grid.ny, v), np.full(grid.ny, v), np.full(grid.nx, v), np.full(grid.nx, v))

    @classmethod
    def zero(cls, grid: Grid) -> "BoundaryTrace":
        return cls.constant(grid, 0.0)

    @classmethod
    def from_function(cls, grid: Grid, f) -> "BoundaryTrace":
        """Sample f(x, y) at boundary face centers."""
        xc, yc = grid.xc(), grid.yc()
        return cls(
            left=np.asarray(f(np.zeros_like(yc), yc), dtype=float) * np.ones_like(yc),
            right=np.asarray(f(np.full_like(yc, grid.Lx), yc), dtype=float) * np.ones_like(yc),
            bottom=np.asarray(f(xc, np.zeros_like(xc)), dtype=float) * np.ones_like(xc),
            top=np.asarray(f(xc, np.full_like(xc, grid.Ly)), dtype=float) * np.ones_like(xc),
        )

    def min(self) -> float:
        return float(min(self.left.min(), self.right.min(), self.bottom.min(), self.top.min()))

    def max(self) -> float:
        return float(max(self.left.max(), self.right.max(), self.bottom.max(), self.top.max()))

    def mirrored_x(self) -> "BoundaryTrace":
        """Trace of the field mirrored through x -> Lx - x."""
        return BoundaryTrace(self.right.copy(), self.left.copy(), self.bottom[::-1].copy(), self.top[::-1].copy())

    def map(self, f) -> "BoundaryTrace":
        return BoundaryTrace(f(self.left), f(self.right), f(self.bottom), f(self.top))


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet traces for the two ionic species and the potential."""

    gamma1: BoundaryTrace
    gamma2: BoundaryTrace
    W: BoundaryTrace

    def __post_init__(self):
        if min(self.gamma1.min(), self.gamma2.min()) <= 0.0:
            raise ValueError("ionic boundary traces must be strictly positive")

    @property
    def gamma_lo(self) -> float:
        return min(self.gamma1.min(), self.gamma2.min())

    @property
    def gamma_hi(self) -> float:
        return max(self.gamma1.max(), self.gamma2.max())

    @classmethod
    def constant(cls, grid: Grid, gamma1: float, gamma2: float, W: float = 0.0) -> "BoundaryData":
        return cls(
            BoundaryTrace.constant(grid, gamma1),
            BoundaryTrace.constant(grid, gamma2),
            BoundaryTrace.constant(grid, W),
        )


ZERO_TRACE = "zero"


def integrate(f, grid: Grid | None = None) -> float:
    """Midpoint-rule integral of a ScalarField, or of a bare cell array
    with the grid passed explicitly."""
    if isinstance(f, ScalarField):
        return float(np.sum(f.values)) * f.grid.cell_volume
    if grid is None:
        raise TypeError("integrate needs a grid when given a bare array")
    return float(np.sum(f)) * grid.cell_volume


def _boundary_grad_sq(values: np.ndarray, grid: Grid, trace) -> float:
    """Sum of squared one-sided boundary gradients, weighted by half cells.

    trace = BoundaryTrace uses prescribed wall values over the half spacing;
    trace = None copies the nearest interior face gradient instead (no
    Dirichlet data available).
    """
    hx, hy = grid.hx, grid.hy
    if trace is None:
        gl = (values[1, :] - values[0, :]) / hx
        gr = (values[-1, :] - values[-2, :]) / hx
        gb = (values[:, 1] - values[:, 0]) / hy
        gt = (values[:, -1] - values[:, -2]) / hy
    else:
        gl = (values[0, :] - trace.left) / (hx / 2.0)
        gr = (trace.right - values[-1, :]) / (hx / 2.0)
        gb = (values[:, 0] - trace.bottom) / (hy / 2.0)
        gt = (trace.top - values[:, -1]) / (hy / 2.0)
    sx = (np.sum(gl * gl) + np.sum(gr * gr)) * (hx / 2.0) * hy
    sy = (np.sum(gb * gb) + np.sum(gt * gt)) * hx * (hy / 2.0)
    return float(sx + sy)


def scalar_h1semi_sq(values, grid: Grid | None = None, trace=ZERO_TRACE) -> float:
    """Integral of |grad f|^2 with one-sided boundary gradients.

    Accepts a ScalarField or a bare cell array plus grid.  With a zero (or
    supplied) trace this equals the quadratic form of the ghost-cell
    Dirichlet Laplacian exactly.
    """
    if isinstance(values, ScalarField):
        values, grid = values.values, values.grid
    if grid is None:
        raise TypeError("scalar_h1semi_sq needs a grid when given a bare array")
    hx, hy = grid.hx, grid.hy
    dx = (values[1:, :] - values[:-1, :]) / hx
    dy = (values[:, 1:] - values[:, :-1]) / hy
    s = (np.sum(dx * dx) + np.sum(dy * dy)) * hx * hy
    if trace == ZERO_TRACE:
        trace = BoundaryTrace.zero(grid)
    return s + _boundary_grad_sq(values, grid, trace)


def dirichlet_h1_inner(a, b, grid: Grid | None = None) -> float:
    """H^1_0 inner product (integral of grad a . grad b) for zero-trace
    fields; accepts ScalarFields or bare cell arrays plus grid."""
    if isinstance(a, ScalarField):
        grid = a.grid
        a = a.values
    if isinstance(b, ScalarField):
        grid = b.grid if grid is None else grid
        b = b.values
    if grid is None:
        raise TypeError("dirichlet_h1_inner needs a grid when given bare arrays")
    hx, hy = grid.hx, grid.hy
    dxa = (a[1:, :] - a[:-1, :]) / hx
    dxb = (b[1:, :] - b[:-1, :]) / hx
    dya = (a[:, 1:] - a[:, :-1]) / hy
    dyb = (b[:, 1:] - b[:, :-1]) / hy
    s = (np.sum(dxa * dxb) + np.sum(dya * dyb)) * hx * hy
    # boundary faces: zero trace, gradient value/(h/2), half-cell weight
    s += (np.sum(a[0, :] * b[0, :]) + np.sum(a[-1, :] * b[-1, :])) * (2.0 / hx) * hy
    s += (np.sum(a[:, 0] * b[:, 0]) + np.sum(a[:, -1] * b[:, -1])) * hx * (2.0 / hy)
    return float(s)


def vector_l2_sq(u: VectorField) -> float:
    """L^2 norm squared of a MAC field; wall-normal faces carry half cells."""
    g = u.grid
    wx = np.ones(g.nx + 1)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(g.ny + 1)
    wy[0] = wy[-1] = 0.5
    sx = np.sum((u.ux * u.ux) * wx[:, None])
    sy = np.sum((u.uy * u.uy) * wy[None, :])
    return float((sx + sy) * g.cell_volume)


def vector_v_inner(u: VectorField, v: VectorField) -> float:
    """V inner product: integral of grad u : grad v with no-slip walls.

    Matches the quadratic form of the MAC velocity Laplacian: wall-normal
    neighbors are literal zeros at spacing h, tangential walls use the
    half-spacing one-sided gradient (ghost reflection).
    """
    g = u.grid
    hx, hy = g.hx, g.hy
    vol = g.cell_volume
    s = 0.0

    # ux: x-differences at cell centers (includes wall faces ux[0], ux[nx])
    dxu = (u.ux[1:, :] - u.ux[:-1, :]) / hx
    dxv = (v.ux[1:, :] - v.ux[:-1, :]) / hx
    s += np.sum(dxu * dxv) * vol
    # ux: y-differences at interior corners
    dyu = (u.ux[1:-1, 1:] - u.ux[1:-1, :-1]) / hy
    dyv = (v.ux[1:-1, 1:] - v.ux[1:-1, :-1]) / hy
    s += np.sum(dyu * dyv) * vol
    # ux: tangential wall gradients over hy/2, half-cell weight
    s += (np.sum(u.ux[1:-1, 0] * v.ux[1:-1, 0]) + np.sum(u.ux[1:-1, -1] * v.ux[1:-1, -1])) * hx * (2.0 / hy)

    # uy mirrored
    dyu = (u.uy[:, 1:] - u.uy[:, :-1]) / hy
    dyv = (v.uy[:, 1:] - v.uy[:, :-1]) / hy
    s += np.sum(dyu * dyv) * vol
    dxu = (u.uy[1:, 1:-1] - u.uy[:-1, 1:-1]) / hx
    dxv = (v.uy[1:, 1:-1] - v.uy[:-1, 1:-1]) / hx
    s += np.sum(dxu * dxv) * vol
    s += (np.sum(u.uy[0, 1:-1] * v.uy[0, 1:-1]) + np.sum(u.uy[-1, 1:-1] * v.uy[-1, 1:-1])) * (2.0 / hx) * hy

    return float(s)


def norms(f, trace=ZERO_TRACE) -> dict:
    """l2_sq and h1semi_sq of a field.

    Scalar fields take a Dirichlet trace for the boundary gradient: the
    default is a zero trace, ``trace=None`` disables prescribed wall values
    (nearest interior gradient is reused), or pass a BoundaryTrace.  Vector
    fields always use the no-slip convention.
    """
    if isinstance(f, ScalarField):
        l2 = float(np.sum(f.values * f.values)) * f.grid.cell_volume
        return {"l2_sq": l2, "h1semi_sq": scalar_h1semi_sq(f.values, f.grid, trace)}
    if isinstance(f, VectorField):
        return {"l2_sq": vector_l2_sq(f), "h1semi_sq": vector_v_inner(f, f)}
    raise TypeError(f"norms expects ScalarField or VectorField, got {type(f)!r}")


def discrete_divergence(u: VectorField) -> ScalarField:
    """Cell-centered divergence of a MAC field."""
    g = u.grid
    div = (u.ux[1:, :] - u.ux[:-1, :]) / g.hx + (u.uy[:, 1:] - u.uy[:, :-1]) / g.hy
    return ScalarField(g, div)
