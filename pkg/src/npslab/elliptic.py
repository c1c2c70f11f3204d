"""Dirichlet elliptic solves on the cell-centered grid.

The 5-point Laplacian uses ghost cells reflecting the prescribed trace:
for a boundary cell the missing neighbor value is ``2 g - c`` where ``g``
is the wall value at the face center, half a spacing away.  One sparse
factorization per grid is cached and shared by every solve; the potential
equation ``-eps Lap(phi) = rho`` reuses it by scaling the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergence
from .grid import BoundaryTrace, Grid, ScalarField

_TOL = 1e-10


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    residual_l2: float
    converged: bool


@dataclass(frozen=True)
class EllipticProblem:
    """One Dirichlet solve: -coefficient * Lap(u) = rhs, u = trace on walls."""

    grid: Grid
    rhs: ScalarField
    trace: BoundaryTrace
    coefficient: float = 1.0

    def __post_init__(self):
        if self.coefficient <= 0:
            raise ValueError("elliptic coefficient must be positive")


def _grid_key(grid: Grid):
    return (grid.nx, grid.ny, grid.Lx, grid.Ly)


_matrix_cache: dict = {}
_factor_cache: dict = {}


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Matrix of -Lap with homogeneous-Dirichlet ghost closure, x-fastest."""
    key = _grid_key(grid)
    if key in _matrix_cache:
        return _matrix_cache[key]
    nx, ny = grid.nx, grid.ny
    ax, ay = 1.0 / grid.hx**2, 1.0 / grid.hy**2

    diag = np.full((nx, ny), 2.0 * (ax + ay))
    diag[0, :] += ax
    diag[-1, :] += ax
    diag[:, 0] += ay
    diag[:, -1] += ay

    def idx(i, j):
        return i + j * nx

    I, J, V = [], [], []
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I.append(idx(ii, jj).ravel())
    J.append(idx(ii, jj).ravel())
    V.append(diag.ravel())
    # x neighbors
    iw, jw = np.meshgrid(np.arange(1, nx), np.arange(ny), indexing="ij")
    I.append(idx(iw, jw).ravel())
    J.append(idx(iw - 1, jw).ravel())
    V.append(np.full(iw.size, -ax))
    I.append(idx(iw - 1, jw).ravel())
    J.append(idx(iw, jw).ravel())
    V.append(np.full(iw.size, -ax))
    # y neighbors
    iv, jv = np.meshgrid(np.arange(nx), np.arange(1, ny), indexing="ij")
    I.append(idx(iv, jv).ravel())
    J.append(idx(iv, jv - 1).ravel())
    V.append(np.full(iv.size, -ay))
    I.append(idx(iv, jv - 1).ravel())
    J.append(idx(iv, jv).ravel())
    V.append(np.full(iv.size, -ay))

    A = sp.coo_matrix(
        (np.concatenate(V), (np.concatenate(I), np.concatenate(J))),
        shape=(nx * ny, nx * ny),
    ).tocsr()
    _matrix_cache[key] = A
    return A


def laplacian_factor(grid: Grid):
    key = _grid_key(grid)
    if key not in _factor_cache:
        _factor_cache[key] = spla.splu(laplacian_matrix(grid).tocsc())
    return _factor_cache[key]


def boundary_rhs(grid: Grid, trace: BoundaryTrace) -> np.ndarray:
    """Ghost contributions of the trace to the -Lap system, shape (nx, ny)."""
    nx, ny = grid.nx, grid.ny
    ax, ay = 1.0 / grid.hx**2, 1.0 / grid.hy**2
    b = np.zeros((nx, ny))
    b[0, :] += 2.0 * ax * trace.left
    b[-1, :] += 2.0 * ax * trace.right
    b[:, 0] += 2.0 * ay * trace.bottom
    b[:, -1] += 2.0 * ay * trace.top
    return b


def _solve(grid: Grid, rhs_flat: np.ndarray) -> tuple[np.ndarray, SolverReport]:
    A = laplacian_matrix(grid)
    lu = laplacian_factor(grid)
    x = lu.solve(rhs_flat)
    scale = max(float(np.linalg.norm(rhs_flat)), 1e-300)
    r = rhs_flat - A @ x
    rel = float(np.linalg.norm(r)) / scale
    iters = 1
    if rel > _TOL:
        x = x + lu.solve(r)
        r = rhs_flat - A @ x
        rel = float(np.linalg.norm(r)) / scale
        iters = 2
    report = SolverReport(iterations=iters, residual_l2=rel, converged=rel <= _TOL)
    if not report.converged:
        raise NonConvergence(f"Dirichlet solve residual {rel:.3e} above {_TOL}", report)
    return x, report


def solve_potential(rho: ScalarField, W: BoundaryTrace, eps: float) -> tuple[ScalarField, SolverReport]:
    """Solve -eps Lap(phi) = rho with phi = W on the boundary."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = rho.grid
    rhs = rho.values / eps + boundary_rhs(g, W)
    x, report = _solve(g, rhs.ravel(order="F"))
    return ScalarField(g, x.reshape((g.nx, g.ny), order="F")), report


def inv_dirichlet_laplacian(rho: ScalarField) -> ScalarField:
    """phi with -Lap(phi) = rho and zero trace."""
    g = rho.grid
    x, _ = _solve(g, rho.values.ravel(order="F"))
    return ScalarField(g, x.reshape((g.nx, g.ny), order="F"))


def harmonic_extension(grid: Grid, gamma: BoundaryTrace) -> ScalarField:
    """Discrete harmonic field matching the trace; max principle holds."""
    rhs = boundary_rhs(grid, gamma)
    x, _ = _solve(grid, rhs.ravel(order="F"))
    return ScalarField(grid, x.reshape((grid.nx, grid.ny), order="F"))


def solve_elliptic(problem: EllipticProblem) -> tuple[ScalarField, SolverReport]:
    """General entry point for an EllipticProblem."""
    g = problem.grid
    rhs = problem.rhs.values / problem.coefficient + boundary_rhs(g, problem.trace)
    x, report = _solve(g, rhs.ravel(order="F"))
    return ScalarField(g, x.reshape((g.nx, g.ny), order="F")), report


def _seed_vector(n: int, seed: int = 20260815) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def dirichlet_eigenpairs(grid: Grid, k: int) -> tuple[np.ndarray, list[ScalarField]]:
    """k smallest Dirichlet Laplacian eigenvalues with eigenfields."""
    n = grid.n_cells
    if k > 64:
        raise ValueError("k must be <= 64")
    if k >= n - 1:
        raise ValueError(f"k={k} exceeds resolvable modes on a {grid.nx}x{grid.ny} grid")
    A = laplacian_matrix(grid)
    vals, vecs = spla.eigsh(A, k=k, sigma=0.0, which="LM", v0=_seed_vector(n), tol=0.0)
    order = np.argsort(vals)
    vals = vals[order]
    fields = [
        ScalarField(grid, vecs[:, o].reshape((grid.nx, grid.ny), order="F")) for o in order
    ]
    return vals, fields


def smallest_eigenvalues(grid: Grid, op: str, k: int) -> list[float]:
    """k smallest eigenvalues of the named operator, ascending.

    op = "dirichlet_laplacian": scalar -Lap with zero trace.
    op = "stokes_operator": Leray-projected -Lap on no-slip MAC fields,
    computed by shift-invert through the cached steady saddle factorization.
    """
    if op == "dirichlet_laplacian":
        vals, _ = dirichlet_eigenpairs(grid, k)
        return [float(v) for v in vals]
    if op == "stokes_operator":
        from . import fluid

        vals, _ = fluid.stokes_eigenpairs(grid, k)
        return [float(v) for v in vals]
    raise ValueError(f"unknown operator {op!r}")
