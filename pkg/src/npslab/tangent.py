"""Linearized flow along a stored base trajectory.

tangent_step is the exact Jacobian-vector product of one coupled_step:
every branch of the nonlinear update (upwind selection, Scharfetter-
Gummel coefficients, log-mean force weights, saddle Stokes solve) is
differentiated rather than re-discretized, so the defect of

    S(w0 + r xi) - S(w0) - r S'(w0) xi

is genuinely O(r^2) at fixed grid and step size.  Perturbation fields
carry zero Dirichlet traces (differences of solutions with equal wall
data), which the stencils preserve exactly.

Volume elements: a bundle of N tangent modes is advanced together and
periodically re-orthonormalized (modified Gram-Schmidt) in the inner
product

    <a, b> = (grad a_c1, grad b_c1) + (grad a_c2, grad b_c2)
             + (grad a_u : grad b_u),

accumulating the log of each normalization factor.  The factors divided
by elapsed time estimate per-mode growth exponents sigma_1 >= sigma_2
>= ...; the first N whose partial sum dips below -N is the reported
dimension bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import inv_dirichlet_laplacian
from .errors import BundleRankDeficient, RankDeficient
from .fluid import StokesWorkspace, pack_velocity, unpack_velocity
from .grid import (
    BoundaryData,
    BoundaryTrace,
    Grid,
    ScalarField,
    VectorField,
    dirichlet_h1_inner,
    vector_v_inner,
)
from .numerics import dbernoulli, dlogmean, logmean
from .transport import Params, State, assemble_sg, face_jumps


@dataclass
class TangentState:
    """Zero-trace perturbation (c1, c2, u) attached to a base time."""

    cb1: ScalarField
    cb2: ScalarField
    ub: VectorField
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.cb1.grid

    def copy(self) -> "TangentState":
        return TangentState(self.cb1.copy(), self.cb2.copy(), self.ub.copy(), self.t)

    def scaled(self, a: float) -> "TangentState":
        return TangentState(
            ScalarField(self.grid, a * self.cb1.values),
            ScalarField(self.grid, a * self.cb2.values),
            VectorField(self.grid, a * self.ub.ux, a * self.ub.uy),
            self.t,
        )

    def axpy(self, a: float, other: "TangentState") -> None:
        """self += a * other, in place."""
        self.cb1.values += a * other.cb1.values
        self.cb2.values += a * other.cb2.values
        self.ub.ux += a * other.ub.ux
        self.ub.uy += a * other.ub.uy


def v0_inner(a: TangentState, b: TangentState) -> float:
    """Gradient inner product on zero-trace perturbations."""
    return (
        dirichlet_h1_inner(a.cb1, b.cb1)
        + dirichlet_h1_inner(a.cb2, b.cb2)
        + vector_v_inner(a.ub, b.ub)
    )


def v0_norm(a: TangentState) -> float:
    return math.sqrt(max(v0_inner(a, a), 0.0))


def random_tangent_state(grid: Grid, rng: np.random.Generator, t: float = 0.0) -> TangentState:
    from .fluid import n_velocity_dofs

    nux, nuy = n_velocity_dofs(grid)
    return TangentState(
        ScalarField(grid, rng.standard_normal((grid.nx, grid.ny))),
        ScalarField(grid, rng.standard_normal((grid.nx, grid.ny))),
        unpack_velocity(rng.standard_normal(nux + nuy), grid),
        t,
    )


def difference_state(wA: State, wB: State) -> TangentState:
    """wA - wB as a zero-trace perturbation (same wall data assumed)."""
    grid = wA.grid
    return TangentState(
        ScalarField(grid, wA.c1.values - wB.c1.values),
        ScalarField(grid, wA.c2.values - wB.c2.values),
        VectorField(grid, wA.u.ux - wB.u.ux, wA.u.uy - wB.u.uy),
        wA.t,
    )


def _upwind_divergence_jvp(
    u: VectorField, ub: VectorField, c: np.ndarray, cb: np.ndarray, grid: Grid
) -> np.ndarray:
    """Directional derivative of the first-order upwind div(u c), using
    exactly the branch selection of the base evaluation."""
    uxi, uyi = u.ux[1:-1, :], u.uy[:, 1:-1]
    ubxi, ubyi = ub.ux[1:-1, :], ub.uy[:, 1:-1]
    cfx = np.where(uxi > 0.0, c[:-1, :], c[1:, :])
    cfy = np.where(uyi > 0.0, c[:, :-1], c[:, 1:])
    cbfx = np.where(uxi > 0.0, cb[:-1, :], cb[1:, :])
    cbfy = np.where(uyi > 0.0, cb[:, :-1], cb[:, 1:])
    Fx = np.zeros((grid.nx + 1, grid.ny))
    Fy = np.zeros((grid.nx, grid.ny + 1))
    Fx[1:-1, :] = ubxi * cfx + uxi * cbfx
    Fy[:, 1:-1] = ubyi * cfy + uyi * cbfy
    return (Fx[1:, :] - Fx[:-1, :]) / grid.hx + (Fy[:, 1:] - Fy[:, :-1]) / grid.hy


def _sg_phi_jvp(
    grid: Grid,
    c_new: np.ndarray,
    dphi,
    dphib,
    z: int,
    D: float,
    gamma: BoundaryTrace,
) -> np.ndarray:
    """Derivative of the SG residual A(Phi) c - b(Phi) with respect to the
    potential, in direction Phi_b (zero trace), evaluated at c = c_new."""
    kx, ky = D / grid.hx**2, D / grid.hy**2
    out = np.zeros((grid.nx, grid.ny))

    sx = z * dphi.x
    sbx = z * dphib.x
    dFx = kx * sbx * (dbernoulli(sx) * c_new[:-1, :] + dbernoulli(-sx) * c_new[1:, :])
    out[:-1, :] += dFx
    out[1:, :] -= dFx
    sy = z * dphi.y
    sby = z * dphib.y
    dFy = ky * sby * (dbernoulli(sy) * c_new[:, :-1] + dbernoulli(-sy) * c_new[:, 1:])
    out[:, :-1] += dFy
    out[:, 1:] -= dFy

    sl = z * dphi.left
    sbl = z * dphib.left
    out[0, :] += 2.0 * kx * sbl * (-dbernoulli(-sl) * c_new[0, :] - dbernoulli(sl) * gamma.left)
    sr = z * dphi.right
    sbr = z * dphib.right
    out[-1, :] += 2.0 * kx * sbr * (dbernoulli(sr) * c_new[-1, :] + dbernoulli(-sr) * gamma.right)
    sb = z * dphi.bottom
    sbb = z * dphib.bottom
    out[:, 0] += 2.0 * ky * sbb * (-dbernoulli(-sb) * c_new[:, 0] - dbernoulli(sb) * gamma.bottom)
    st = z * dphi.top
    sbt = z * dphib.top
    out[:, -1] += 2.0 * ky * sbt * (dbernoulli(st) * c_new[:, -1] + dbernoulli(-st) * gamma.top)
    return out


def _force_jvp(
    c1n: np.ndarray, c2n: np.ndarray, phin: np.ndarray,
    cb1n: np.ndarray, cb2n: np.ndarray, phibn: np.ndarray,
    K: float, grid: Grid,
) -> VectorField:
    """Directional derivative of the log-mean electric force at the new
    time level (tangent potential has zero trace)."""
    f = VectorField.zeros(grid)

    def face_terms(aL, aR, bL, bR, pL, pR, qL, qR):
        m = logmean(aL, aR) - logmean(bL, bR)
        d1L, d1R = dlogmean(aL, aR)
        d2L, d2R = dlogmean(bL, bR)
        mb = d1L * pL + d1R * pR - (d2L * qL + d2R * qR)
        return m, mb

    dphi_x = (phin[1:, :] - phin[:-1, :]) / grid.hx
    dphib_x = (phibn[1:, :] - phibn[:-1, :]) / grid.hx
    m, mb = face_terms(
        c1n[:-1, :], c1n[1:, :], c2n[:-1, :], c2n[1:, :],
        cb1n[:-1, :], cb1n[1:, :], cb2n[:-1, :], cb2n[1:, :],
    )
    f.ux[1:-1, :] = -K * (mb * dphi_x + m * dphib_x)

    dphi_y = (phin[:, 1:] - phin[:, :-1]) / grid.hy
    dphib_y = (phibn[:, 1:] - phibn[:, :-1]) / grid.hy
    m, mb = face_terms(
        c1n[:, :-1], c1n[:, 1:], c2n[:, :-1], c2n[:, 1:],
        cb1n[:, :-1], cb1n[:, 1:], cb2n[:, :-1], cb2n[:, 1:],
    )
    f.uy[:, 1:-1] = -K * (mb * dphi_y + m * dphib_y)
    return f


def tangent_step(
    ts: TangentState,
    base: State,
    base_next: State,
    dt: float,
    bd: BoundaryData,
    p: Params,
    ws: StokesWorkspace,
) -> TangentState:
    """Exact JVP of coupled_step with first-order upwind advection.

    base and base_next must be consecutive states of a trajectory
    integrated with advection="upwind1" and the same dt.
    """
    grid = ts.grid
    if abs(base_next.t - base.t - dt) > 1e-12 * max(1.0, abs(base.t)):
        raise ValueError("base states are not dt apart")
    zero = BoundaryTrace.zero(grid)
    dt_inv = 1.0 / dt

    rho_b = ts.cb1.values - ts.cb2.values
    phib = inv_dirichlet_laplacian(ScalarField(grid, rho_b / p.eps))
    dphi = face_jumps(base.phi.values, bd.W, grid)
    dphib = face_jumps(phib.values, zero, grid)

    new_cb = []
    for species, c, cbv, gamma in (
        (1, base.c1, ts.cb1, bd.gamma1),
        (2, base.c2, ts.cb2, bd.gamma2),
    ):
        c_next = base_next.c1 if species == 1 else base_next.c2
        adv = _upwind_divergence_jvp(base.u, ts.ub, c.values, cbv.values, grid)
        G = _sg_phi_jvp(grid, c_next.values, dphi, dphib, p.z(species), p.D(species), gamma)
        rhs = (cbv.values - dt * adv) * dt_inv - G
        sys = assemble_sg(grid, dphi, p.z(species), p.D(species), gamma)
        M = (sys.A + sp.eye(grid.n_cells, format="csr") * dt_inv).tocsc()
        sol = spla.splu(M).solve(rhs.ravel(order="F"))
        new_cb.append(sol.reshape((grid.nx, grid.ny), order="F"))

    cb1n, cb2n = new_cb
    rho_bn = cb1n - cb2n
    phibn = inv_dirichlet_laplacian(ScalarField(grid, rho_bn / p.eps))

    fb = _force_jvp(
        base_next.c1.values, base_next.c2.values, base_next.phi.values,
        cb1n, cb2n, phibn.values, p.K, grid,
    )
    rhs_u = pack_velocity(ts.ub) * dt_inv + pack_velocity(fb)
    uvec, _ = ws.solve(rhs_u, dt)
    ubn = unpack_velocity(uvec, grid)
    return TangentState(ScalarField(grid, cb1n), ScalarField(grid, cb2n), ubn, base_next.t)


@dataclass
class TangentBundle:
    """N tangent modes plus accumulated log normalization factors."""

    modes: list
    log_factors: np.ndarray
    elapsed: float = 0.0
    gram_log_dets: list = field(default_factory=list)
    sigma_history: list = field(default_factory=list)

    @classmethod
    def random(cls, grid: Grid, N: int, seed: int = 20260815) -> "TangentBundle":
        rng = np.random.default_rng(seed)
        return cls(
            modes=[random_tangent_state(grid, rng) for _ in range(N)],
            log_factors=np.zeros(N),
        )

    @property
    def N(self) -> int:
        return len(self.modes)

    def gram(self) -> np.ndarray:
        G = np.empty((self.N, self.N))
        for i in range(self.N):
            for j in range(i, self.N):
                G[i, j] = G[j, i] = v0_inner(self.modes[i], self.modes[j])
        return G


def orthonormalize(bundle: TangentBundle) -> TangentBundle:
    """Modified Gram-Schmidt in place; accumulates per-mode log factors.

    Raises RankDeficient when the bundle has (numerically) collapsed:
    Gram condition number beyond 1e12 or a vanishing normalization.
    """
    G = bundle.gram()
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e12:
        idx = int(np.argmin(np.linalg.eigvalsh(G)))
        raise RankDeficient(f"bundle Gram condition number {cond:.3e}", mode_index=idx)
    sign, logdet = np.linalg.slogdet(G)
    if sign <= 0:
        raise RankDeficient("bundle Gram determinant not positive", mode_index=-1)
    bundle.gram_log_dets.append(logdet)

    for j in range(bundle.N):
        mode = bundle.modes[j]
        for i in range(j):
            mode.axpy(-v0_inner(bundle.modes[i], mode), bundle.modes[i])
        nrm2 = v0_inner(mode, mode)
        if not nrm2 > 0.0:
            raise RankDeficient(f"mode {j} collapsed during orthonormalization", mode_index=j)
        nrm = math.sqrt(nrm2)
        bundle.log_factors[j] += math.log(nrm)
        bundle.modes[j] = mode.scaled(1.0 / nrm)
    return bundle


def volume_growth_rates(log_factors: np.ndarray, elapsed: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode exponents sorted descending, and their partial sums."""
    if elapsed <= 0:
        raise ValueError("elapsed time must be positive")
    sigma = np.sort(np.asarray(log_factors, dtype=float) / elapsed)[::-1]
    return sigma, np.cumsum(sigma)


def evolve_bundle(
    bundle: TangentBundle,
    base_states: list,
    dt: float,
    bd: BoundaryData,
    p: Params,
    ws: StokesWorkspace | None = None,
    cadence: int = 10,
) -> TangentBundle:
    """Advance all modes along the stored base trajectory, re-
    orthonormalizing every `cadence` steps and at the end."""
    if len(base_states) < 2:
        raise ValueError("base trajectory needs at least two states")
    grid = bundle.modes[0].grid
    if ws is None:
        ws = StokesWorkspace(grid, p.nu)
    orthonormalize(bundle)
    bundle.log_factors[:] = 0.0  # discard the initial normalization
    steps = 0
    try:
        for base, base_next in zip(base_states[:-1], base_states[1:]):
            bundle.modes = [
                tangent_step(m, base, base_next, dt, bd, p, ws) for m in bundle.modes
            ]
            steps += 1
            bundle.elapsed += dt
            if steps % cadence == 0:
                orthonormalize(bundle)
                sig, _ = volume_growth_rates(bundle.log_factors, bundle.elapsed)
                bundle.sigma_history.append((bundle.elapsed, sig.copy()))
        if steps % cadence != 0:
            orthonormalize(bundle)
            sig, _ = volume_growth_rates(bundle.log_factors, bundle.elapsed)
            bundle.sigma_history.append((bundle.elapsed, sig.copy()))
    except RankDeficient as exc:
        raise BundleRankDeficient(f"bundle collapsed after {steps} steps: {exc}") from exc
    return bundle


def dimension_bound(bundle: TangentBundle, N_max: int) -> dict:
    """Empirical dimension table: smallest N with sum_{j<=N} sigma_j <= -N.

    Returns {"N_star": int | None, "table": rows, "stabilized": bool};
    each row is (N, sum_sigma, sigma_N, criterion_met).  N_star is None
    when the criterion is not reached up to N_max.
    """
    if N_max > 64:
        raise ValueError("N_max must be <= 64")
    if N_max > bundle.N:
        raise ValueError(f"bundle has only {bundle.N} modes, N_max={N_max}")
    sigma, partial = volume_growth_rates(bundle.log_factors, bundle.elapsed)
    table = []
    n_star = None
    for N in range(1, N_max + 1):
        met = partial[N - 1] <= -float(N)
        table.append((N, float(partial[N - 1]), float(sigma[N - 1]), bool(met)))
        if met and n_star is None:
            n_star = N
    stabilized = False
    if len(bundle.sigma_history) >= 2:
        t_half = bundle.elapsed / 2.0
        older = [s for t, s in bundle.sigma_history if t <= t_half + 1e-12]
        ref = older[-1] if older else bundle.sigma_history[0][1]
        last = bundle.sigma_history[-1][1]
        denom = max(np.max(np.abs(last)), 1e-300)
        stabilized = bool(np.max(np.abs(last - ref)) <= 0.05 * denom)
    return {"N_star": n_star, "table": table, "stabilized": stabilized}


def dimension_table_csv(result: dict, path) -> None:
    """Write the dimension table: N, sum_sigma, sigma_N, criterion_met."""
    with open(path, "w", newline="\n") as fh:
        fh.write("N,sum_sigma,sigma_N,criterion_met\n")
        for N, ssum, sN, met in result["table"]:
            fh.write(f"{N},{repr(ssum)},{repr(sN)},{int(met)}\n")
