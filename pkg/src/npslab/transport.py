"""Nernst-Planck transport: Scharfetter-Gummel drift-diffusion plus
explicit upwind advection.

The implicit part of a step solves, per species,

    (1/dt) (c' - c_adv) + div J_sg(c', Phi) = (1/dt) c_adv  rearranged as
    (I/dt + A_sg(Phi)) c' = c_adv/dt + b_wall(gamma, W, Phi)

where A_sg is the finite-volume divergence of exponentially fitted face
fluxes.  A_sg is an M-matrix for every Phi, so the solve preserves
positivity unconditionally; with the strict-envelope dt bound (see sim)
the two-species max/min envelopes are preserved to rounding as well.

Face flux convention along +x (and likewise +y), for left cell value cL,
right cell value cR and potential jump dV = z (Phi_R - Phi_L):

    F = (D/h) [B(dV) cL - B(-dV) cR],   B(s) = s / (e^s - 1)

which reduces to central diffusion for dV = 0, to D c (-dV)/h for uniform
c (Bernoulli identity B(-s) - B(s) = s), and vanishes identically on
discrete Boltzmann profiles c = const * e^{-V}.  Wall faces use the same
formula over the half spacing h/2 with the Dirichlet trace as the outside
value, so discrete Boltzmann states are exact steady states including the
boundary closure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolveFailure, MaxPrincipleViolation, NonpositiveConcentration
from .grid import BoundaryData, BoundaryTrace, Grid, ScalarField, VectorField
from .numerics import bernoulli, minmod


@dataclass(frozen=True)
class Params:
    """Model constants; valences are fixed at +1/-1."""

    eps: float
    D1: float
    D2: float
    nu: float
    K: float
    delta: float = 1.0
    z1: int = 1
    z2: int = -1

    def __post_init__(self):
        if min(self.eps, self.D1, self.D2, self.nu, self.K) <= 0:
            raise ValueError("eps, D1, D2, nu, K must all be positive")
        if self.delta <= 0:
            raise ValueError("energy weight delta must be positive")
        if (self.z1, self.z2) != (1, -1):
            raise ValueError("valences are fixed at z1=+1, z2=-1")

    def D(self, species: int) -> float:
        return self.D1 if species == 1 else self.D2

    def z(self, species: int) -> int:
        return self.z1 if species == 1 else self.z2


@dataclass
class State:
    """Solution triple plus the cached consistent potential."""

    t: float
    c1: ScalarField
    c2: ScalarField
    u: VectorField
    phi: ScalarField

    @property
    def grid(self) -> Grid:
        return self.c1.grid

    @property
    def rho(self) -> ScalarField:
        return ScalarField(self.grid, self.c1.values - self.c2.values)

    def copy(self) -> "State":
        return State(self.t, self.c1.copy(), self.c2.copy(), self.u.copy(), self.phi.copy())


def make_state(t: float, c1: ScalarField, c2: ScalarField, u: VectorField, bd: BoundaryData, p: Params) -> State:
    """Build a State with the potential solved from (rho, W, eps)."""
    from .elliptic import solve_potential

    if c1.values.min() < 0.0 or c2.values.min() < 0.0:
        raise NonpositiveConcentration("make_state requires nonnegative concentrations")
    rho = ScalarField(c1.grid, c1.values - c2.values)
    phi, _ = solve_potential(rho, bd.W, p.eps)
    return State(t, c1, c2, u, phi)


def validate_state(state: State, bd: BoundaryData, p: Params, tol: float = 1e-9) -> None:
    """Check State invariants: nonnegative species, consistent potential."""
    from .elliptic import solve_potential

    if state.c1.values.min() < 0 or state.c2.values.min() < 0:
        raise NonpositiveConcentration("state has negative concentrations")
    phi, _ = solve_potential(state.rho, bd.W, p.eps)
    err = float(np.max(np.abs(phi.values - state.phi.values)))
    scale = max(1.0, float(np.max(np.abs(phi.values))))
    if err > tol * scale:
        raise ValueError(f"cached potential inconsistent with (rho, W, eps): {err:.3e}")


def sg_flux(cL, cR, dV, D: float, h: float):
    """Scharfetter-Gummel face flux along the +axis direction."""
    return (D / h) * (bernoulli(dV) * np.asarray(cL, dtype=float) - bernoulli(-np.asarray(dV, dtype=float)) * np.asarray(cR, dtype=float))


class FaceJumps(NamedTuple):
    """Potential differences Phi_R - Phi_L per face, walls included."""

    x: np.ndarray  # (nx-1, ny) interior vertical faces
    y: np.ndarray  # (nx, ny-1) interior horizontal faces
    left: np.ndarray  # (ny,)  cell0 - W_left
    right: np.ndarray  # (ny,)  W_right - cell_last
    bottom: np.ndarray  # (nx,)
    top: np.ndarray  # (nx,)


def face_jumps(phi: np.ndarray, W: BoundaryTrace, grid: Grid) -> FaceJumps:
    return FaceJumps(
        x=phi[1:, :] - phi[:-1, :],
        y=phi[:, 1:] - phi[:, :-1],
        left=phi[0, :] - W.left,
        right=W.right - phi[-1, :],
        bottom=phi[:, 0] - W.bottom,
        top=W.top - phi[:, -1],
    )


class SgSystem(NamedTuple):
    """Operator A_sg (csr) and wall source b so that A c = b at steady state."""

    A: sp.csr_matrix
    b: np.ndarray  # (nx, ny)


def _coo_from_bands(grid: Grid, diag, west, east, south, north) -> sp.csr_matrix:
    nx, ny = grid.nx, grid.ny
    idx = (np.arange(nx)[:, None] + nx * np.arange(ny)[None, :])
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [diag.ravel()]
    rows.append(idx[1:, :].ravel())
    cols.append(idx[:-1, :].ravel())
    vals.append(west.ravel())
    rows.append(idx[:-1, :].ravel())
    cols.append(idx[1:, :].ravel())
    vals.append(east.ravel())
    rows.append(idx[:, 1:].ravel())
    cols.append(idx[:, :-1].ravel())
    vals.append(south.ravel())
    rows.append(idx[:, :-1].ravel())
    cols.append(idx[:, 1:].ravel())
    vals.append(north.ravel())
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nx * ny, nx * ny),
    )
    return A.tocsr()


def assemble_sg(grid: Grid, dphi: FaceJumps, z: int, D: float, gamma: BoundaryTrace) -> SgSystem:
    """Assemble the SG drift-diffusion operator for one species."""
    nx, ny = grid.nx, grid.ny
    kx, ky = D / grid.hx**2, D / grid.hy**2

    sx = z * dphi.x
    sy = z * dphi.y
    BLx, BRx = bernoulli(sx), bernoulli(-sx)
    BLy, BRy = bernoulli(sy), bernoulli(-sy)

    diag = np.zeros((nx, ny))
    diag[:-1, :] += kx * BLx
    diag[1:, :] += kx * BRx
    diag[:, :-1] += ky * BLy
    diag[:, 1:] += ky * BRy
    east = -kx * BRx
    west = -kx * BLx
    north = -ky * BRy
    south = -ky * BLy

    b = np.zeros((nx, ny))
    sl = z * dphi.left
    diag[0, :] += 2.0 * kx * bernoulli(-sl)
    b[0, :] += 2.0 * kx * bernoulli(sl) * gamma.left
    sr = z * dphi.right
    diag[-1, :] += 2.0 * kx * bernoulli(sr)
    b[-1, :] += 2.0 * kx * bernoulli(-sr) * gamma.right
    sb = z * dphi.bottom
    diag[:, 0] += 2.0 * ky * bernoulli(-sb)
    b[:, 0] += 2.0 * ky * bernoulli(sb) * gamma.bottom
    st = z * dphi.top
    diag[:, -1] += 2.0 * ky * bernoulli(st)
    b[:, -1] += 2.0 * ky * bernoulli(-st) * gamma.top

    return SgSystem(_coo_from_bands(grid, diag, west, east, south, north), b)


def sg_divergence(grid: Grid, c: np.ndarray, dphi: FaceJumps, z: int, D: float, gamma: BoundaryTrace) -> np.ndarray:
    """div J_sg(c, Phi) as assembled; zero exactly at discrete steady states."""
    sys = assemble_sg(grid, dphi, z, D, gamma)
    return (sys.A @ c.ravel(order="F")).reshape((grid.nx, grid.ny), order="F") - sys.b


def _muscl_slopes(c: np.ndarray, axis: int) -> np.ndarray:
    d = np.diff(c, axis=axis)
    if axis == 0:
        dm = np.concatenate([d[:1, :], d], axis=0)
        dp = np.concatenate([d, d[-1:, :]], axis=0)
    else:
        dm = np.concatenate([d[:, :1], d], axis=1)
        dp = np.concatenate([d, d[:, -1:]], axis=1)
    return minmod(dm, dp)


def advective_divergence(
    u: VectorField, c: np.ndarray | ScalarField, grid: Grid, scheme: str = "muscl"
) -> np.ndarray:
    """div(u c) with upwind face values; walls carry zero advective flux."""
    if isinstance(c, ScalarField):
        c = c.values
    uxi = u.ux[1:-1, :]
    uyi = u.uy[:, 1:-1]
    if scheme == "upwind1":
        cfx = np.where(uxi > 0.0, c[:-1, :], c[1:, :])
        cfy = np.where(uyi > 0.0, c[:, :-1], c[:, 1:])
    elif scheme == "muscl":
        sx = _muscl_slopes(c, axis=0)
        sy = _muscl_slopes(c, axis=1)
        cfx = np.where(uxi > 0.0, c[:-1, :] + 0.5 * sx[:-1, :], c[1:, :] - 0.5 * sx[1:, :])
        cfy = np.where(uyi > 0.0, c[:, :-1] + 0.5 * sy[:, :-1], c[:, 1:] - 0.5 * sy[:, 1:])
    else:
        raise ValueError(f"unknown advection scheme {scheme!r}")
    Fx = np.zeros((grid.nx + 1, grid.ny))
    Fy = np.zeros((grid.nx, grid.ny + 1))
    Fx[1:-1, :] = uxi * cfx
    Fy[:, 1:-1] = uyi * cfy
    return (Fx[1:, :] - Fx[:-1, :]) / grid.hx + (Fy[:, 1:] - Fy[:, :-1]) / grid.hy


def np_step(
    state: State,
    dt: float,
    bd: BoundaryData,
    p: Params,
    advection: str = "muscl",
    envelope_check: bool = True,
    sources: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[ScalarField, ScalarField]:
    """One IMEX Nernst-Planck step with the potential frozen at state.phi.

    Explicit limited upwind advection, implicit SG drift-diffusion.  The
    post-check verifies the joint two-species envelope

        min(min_i inf c_i(t), gamma_lo) - 1e-10 <= c_i' <=
        max(max_i sup c_i(t), gamma_hi) + 1e-10

    and raises MaxPrincipleViolation on failure (skipped when manufactured
    sources are active, which legitimately break the envelope).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = state.grid
    dphi = face_jumps(state.phi.values, bd.W, grid)
    dt_inv = 1.0 / dt

    out = []
    for species, c, gamma in ((1, state.c1, bd.gamma1), (2, state.c2, bd.gamma2)):
        c_adv = c.values - dt * advective_divergence(state.u, c.values, grid, advection)
        if sources is not None:
            c_adv = c_adv + dt * sources[species - 1]
        sys = assemble_sg(grid, dphi, p.z(species), p.D(species), gamma)
        M = (sys.A + sp.eye(grid.n_cells, format="csr") * dt_inv).tocsc()
        rhs = (c_adv * dt_inv + sys.b).ravel(order="F")
        try:
            lu = spla.splu(M)
            x = lu.solve(rhs)
        except RuntimeError as exc:  # singular factorization
            raise LinearSolveFailure(f"species {species} implicit solve failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailure(f"species {species} implicit solve returned non-finite values")
        out.append(x.reshape((grid.nx, grid.ny), order="F"))

    c1n, c2n = out
    if sources is None:
        lo_guard = -1e-12 * max(1.0, bd.gamma_hi)
        for name, cn in (("c1", c1n), ("c2", c2n)):
            if cn.min() < lo_guard:
                raise NonpositiveConcentration(f"{name} reached {cn.min():.3e} after implicit solve")
        np.clip(c1n, 0.0, None, out=c1n)
        np.clip(c2n, 0.0, None, out=c2n)

    if envelope_check and sources is None:
        lo = min(float(state.c1.values.min()), float(state.c2.values.min()), bd.gamma_lo)
        hi = max(float(state.c1.values.max()), float(state.c2.values.max()), bd.gamma_hi)
        worst_lo = min(c1n.min(), c2n.min())
        worst_hi = max(c1n.max(), c2n.max())
        if worst_lo < lo - 1e-10 or worst_hi > hi + 1e-10:
            raise MaxPrincipleViolation(
                f"envelope [{lo}, {hi}] violated: new range [{worst_lo}, {worst_hi}]"
            )

    return ScalarField(grid, c1n), ScalarField(grid, c2n)


def electrochemical_potentials(state: State) -> tuple[ScalarField, ScalarField]:
    """mu_i = log c_i + z_i Phi; requires strictly positive concentrations."""
    if state.c1.values.min() <= 0 or state.c2.values.min() <= 0:
        raise NonpositiveConcentration("electrochemical potentials need c > 0")
    g = state.grid
    mu1 = np.log(state.c1.values) + state.phi.values
    mu2 = np.log(state.c2.values) - state.phi.values
    return ScalarField(g, mu1), ScalarField(g, mu2)
