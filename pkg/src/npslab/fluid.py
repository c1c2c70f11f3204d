"""Stokes flow on the MAC grid: implicit velocity step with exact
discrete incompressibility.

Velocity unknowns are the interior faces only; wall faces are no-slip
zeros.  A backward-Euler step solves the saddle system

    [ I/dt + nu L_u   G ] [u']   [u/dt + f]
    [ D               0 ] [p ] = [0       ]

with D = -G^T (so discrete Helmholtz decomposition is exact in the
Euclidean inner product) and the pressure nullspace removed by pinning
p = 0 in the first cell.  Consequences relied on elsewhere:

  * div u' = 0 to direct-solver roundoff after every step;
  * forces that are discrete gradients of a cell field produce exactly
    zero velocity (they are absorbed into the pressure);
  * on the divergence-free subspace the step is u' = u/(1 + dt nu lambda)
    per Stokes eigenmode.

Factorizations are cached per (grid, nu, dt); the simulation driver keeps
dt on a power-of-two ladder so a long run reuses a handful of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolveFailure
from .grid import Grid, ScalarField, VectorField
from .numerics import logmean


def n_velocity_dofs(grid: Grid) -> tuple[int, int]:
    return ((grid.nx - 1) * grid.ny, grid.nx * (grid.ny - 1))


def pack_velocity(u: VectorField) -> np.ndarray:
    """Interior-face dofs as one vector: ux block then uy block, x-fastest."""
    return np.concatenate([
        u.ux[1:-1, :].ravel(order="F"),
        u.uy[:, 1:-1].ravel(order="F"),
    ])


def unpack_velocity(vec: np.ndarray, grid: Grid) -> VectorField:
    nux, nuy = n_velocity_dofs(grid)
    u = VectorField.zeros(grid)
    u.ux[1:-1, :] = vec[:nux].reshape((grid.nx - 1, grid.ny), order="F")
    u.uy[:, 1:-1] = vec[nux:nux + nuy].reshape((grid.nx, grid.ny - 1), order="F")
    return u


def _component_laplacian(n_normal: int, n_tang: int, h_normal: float, h_tang: float) -> sp.csr_matrix:
    """Negative Laplacian for one velocity component, unknowns on an
    (n_normal x n_tang) lattice of interior faces.

    Along the normal direction the missing end neighbors are wall faces
    carrying the literal value 0 at spacing h_normal.  Along the
    tangential direction the wall closure is the ghost reflection
    u_ghost = -u, i.e. an extra 1/h_tang^2 on the diagonal.
    """
    an, at = 1.0 / h_normal**2, 1.0 / h_tang**2
    Dn = sp.diags([2.0 * an * np.ones(n_normal), -an * np.ones(n_normal - 1), -an * np.ones(n_normal - 1)], [0, 1, -1])
    tang_diag = 2.0 * at * np.ones(n_tang)
    tang_diag[0] += at
    tang_diag[-1] += at
    Dt = sp.diags([tang_diag, -at * np.ones(n_tang - 1), -at * np.ones(n_tang - 1)], [0, 1, -1])
    return (sp.kron(sp.eye(n_tang), Dn) + sp.kron(Dt, sp.eye(n_normal))).tocsr()


def velocity_laplacian(grid: Grid) -> sp.csr_matrix:
    """Block-diagonal negative vector Laplacian on interior-face dofs."""
    Lx = _component_laplacian(grid.nx - 1, grid.ny, grid.hx, grid.hy)
    Ly = _component_laplacian(grid.ny - 1, grid.nx, grid.hy, grid.hx).tocoo()
    # uy dofs are ordered x-fastest over (nx, ny-1); _component_laplacian
    # built them normal-fastest (index j + (ny-1)*i), so permute.
    nuy = grid.nx * (grid.ny - 1)
    kb = np.arange(nuy)
    to_xfast = (kb // (grid.ny - 1)) + grid.nx * (kb % (grid.ny - 1))
    Ly = sp.csr_matrix((Ly.data, (to_xfast[Ly.row], to_xfast[Ly.col])), shape=Ly.shape)
    return sp.block_diag([Lx, Ly], format="csr")


def velocity_gradient(grid: Grid) -> sp.csr_matrix:
    """G: cell pressures -> interior-face normal differences."""
    nx, ny = grid.nx, grid.ny
    idx = np.arange(nx * ny).reshape((nx, ny), order="F")
    nux, nuy = n_velocity_dofs(grid)
    rows_x = np.arange(nux)
    east = idx[1:, :].ravel(order="F")
    west = idx[:-1, :].ravel(order="F")
    rows_y = nux + np.arange(nuy)
    north = idx[:, 1:].ravel(order="F")
    south = idx[:, :-1].ravel(order="F")
    rows = np.concatenate([rows_x, rows_x, rows_y, rows_y])
    cols = np.concatenate([east, west, north, south])
    vals = np.concatenate([
        np.full(nux, 1.0 / grid.hx), np.full(nux, -1.0 / grid.hx),
        np.full(nuy, 1.0 / grid.hy), np.full(nuy, -1.0 / grid.hy),
    ])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nux + nuy, nx * ny))


def velocity_divergence(grid: Grid) -> sp.csr_matrix:
    return (-velocity_gradient(grid).T).tocsr()


@dataclass
class StokesWorkspace:
    """Precomputed operators and a cache of saddle factorizations.

    Keyed by dt (None = steady Stokes, i.e. no mass term).
    """

    grid: Grid
    nu: float
    _ops: dict = field(default_factory=dict, repr=False)
    _factors: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        self._ops["L"] = velocity_laplacian(self.grid)
        self._ops["G"] = velocity_gradient(self.grid)
        self._ops["D"] = velocity_divergence(self.grid)

    @property
    def n_u(self) -> int:
        nux, nuy = n_velocity_dofs(self.grid)
        return nux + nuy

    def _saddle(self, dt: float | None) -> spla.SuperLU:
        key = dt
        if key not in self._factors:
            dt_inv = 0.0 if dt is None else 1.0 / dt
            Au = self.nu * self._ops["L"] + dt_inv * sp.eye(self.n_u)
            M = sp.bmat([[Au, self._ops["G"]], [self._ops["D"], None]], format="lil")
            pin = self.n_u  # pressure dof of the first cell
            M.rows[pin] = [pin]
            M.data[pin] = [1.0]
            try:
                self._factors[key] = spla.splu(M.tocsc())
            except RuntimeError as exc:
                raise LinearSolveFailure(f"saddle factorization failed (dt={dt}): {exc}") from exc
        return self._factors[key]

    def solve(self, rhs_u: np.ndarray, dt: float | None) -> tuple[np.ndarray, np.ndarray]:
        """Solve the saddle system for velocity rhs (continuity rhs = 0)."""
        lu = self._saddle(dt)
        rhs = np.zeros(self.n_u + self.grid.n_cells)
        rhs[: self.n_u] = rhs_u
        sol = lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise LinearSolveFailure("saddle solve returned non-finite values")
        return sol[: self.n_u], sol[self.n_u :]


def stokes_step(u: VectorField, f: VectorField, dt: float, ws: StokesWorkspace) -> tuple[VectorField, ScalarField]:
    """Backward-Euler no-slip Stokes step under face force f."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = ws.grid
    rhs = pack_velocity(u) / dt + pack_velocity(f)
    uvec, pvec = ws.solve(rhs, dt)
    un = unpack_velocity(uvec, grid)
    pr = ScalarField(grid, pvec.reshape((grid.nx, grid.ny), order="F"))
    return un, pr


def steady_stokes(f: VectorField, ws: StokesWorkspace) -> tuple[VectorField, ScalarField]:
    """Solve nu L u + G p = f, div u = 0 (no mass term)."""
    uvec, pvec = ws.solve(pack_velocity(f), None)
    grid = ws.grid
    return unpack_velocity(uvec, grid), ScalarField(grid, pvec.reshape((grid.nx, grid.ny), order="F"))


def electric_force(rho: ScalarField, phi: ScalarField, K: float) -> VectorField:
    """-K rho grad(Phi) at interior faces, arithmetic-mean face density."""
    grid = rho.grid
    r, ph = rho.values, phi.values
    f = VectorField.zeros(grid)
    f.ux[1:-1, :] = -K * 0.5 * (r[:-1, :] + r[1:, :]) * (ph[1:, :] - ph[:-1, :]) / grid.hx
    f.uy[:, 1:-1] = -K * 0.5 * (r[:, :-1] + r[:, 1:]) * (ph[:, 1:] - ph[:, :-1]) / grid.hy
    return f


def species_electric_force(c1: ScalarField, c2: ScalarField, phi: ScalarField, K: float) -> VectorField:
    """-K (c1 - c2) grad(Phi) with logarithmic-mean face densities.

    At discrete Boltzmann states c_i = const * e^{-z_i Phi} this equals the
    exact discrete gradient of K (c1 + c2), which the saddle step
    annihilates, so equilibria stay exactly quiescent.
    """
    grid = c1.grid
    a1, a2, ph = c1.values, c2.values, phi.values
    f = VectorField.zeros(grid)
    mx = logmean(a1[:-1, :], a1[1:, :]) - logmean(a2[:-1, :], a2[1:, :])
    my = logmean(a1[:, :-1], a1[:, 1:]) - logmean(a2[:, :-1], a2[:, 1:])
    f.ux[1:-1, :] = -K * mx * (ph[1:, :] - ph[:-1, :]) / grid.hx
    f.uy[:, 1:-1] = -K * my * (ph[:, 1:] - ph[:, :-1]) / grid.hy
    return f


def stokes_eigenpairs(grid: Grid, k: int, nu: float = 1.0) -> tuple[np.ndarray, list[VectorField]]:
    """Smallest k eigenvalues of the no-slip Stokes operator (nu = 1 by
    default so values are pure Laplacian-on-solenoidal-space constants).

    Uses the inverse map w -> velocity part of the steady saddle solve,
    which is symmetric positive semidefinite with eigenvalues 1/lambda on
    the divergence-free subspace and 0 on gradients; Lanczos on the
    largest magnitudes recovers the smallest Stokes eigenvalues.
    """
    ws = StokesWorkspace(grid, nu)
    n = ws.n_u
    if not 1 <= k <= min(64, n - 2):
        raise ValueError(f"k must be in [1, {min(64, n - 2)}]")

    def matvec(w):
        uvec, _ = ws.solve(np.asarray(w, dtype=float), None)
        return uvec

    S = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    rng = np.random.default_rng(20260815)
    mu, vecs = spla.eigsh(S, k=k, which="LM", v0=rng.standard_normal(n))
    order = np.argsort(mu)[::-1]
    mu = mu[order]
    vecs = vecs[:, order]
    if mu[-1] <= 0:
        raise LinearSolveFailure("Stokes inverse iteration returned a non-positive Ritz value")
    lam = 1.0 / mu
    fields = [unpack_velocity(vecs[:, j], grid) for j in range(k)]
    return lam, fields
