"""Steady states: Poisson-Boltzmann equilibria and general steady
drift-diffusion via Gummel alternation.

The PB equation -eps Lap(Phi) = Z1^{-1} e^{-Phi} - Z2^{-1} e^{Phi} is the
Euler-Lagrange equation of the strictly convex energy

    E(Phi) = (eps/2) |grad Phi|^2 - eps <b_W, Phi> + Z1^{-1} e^{-Phi}
             + Z2^{-1} e^{Phi}   (summed over cells),

so damped Newton with Armijo backtracking on E converges globally from
the harmonic extension of the wall data.  The general steady solver
alternates potential solves with linear Scharfetter-Gummel species solves
(an M-matrix system, so iterates stay positive) until the joint residual
is small, then checks the a priori bounds that every steady state must
satisfy: gamma-range confinement, Slotboom-variable confinement between
the boundary extremes of gamma_i e^{z_i W}, and the induced potential
window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import SolverReport, boundary_rhs, harmonic_extension, laplacian_matrix, solve_potential
from .errors import GummelDivergence, NewtonStall
from .grid import BoundaryData, BoundaryTrace, Grid, ScalarField
from .transport import Params, assemble_sg, face_jumps


@dataclass(frozen=True)
class BoltzmannParams:
    """Normalizations of the equilibrium profiles c1 = Z1^{-1} e^{-Phi},
    c2 = Z2^{-1} e^{Phi}."""

    Z1: float
    Z2: float

    def __post_init__(self):
        if self.Z1 <= 0 or self.Z2 <= 0:
            raise ValueError("Boltzmann normalizations must be positive")


@dataclass
class SteadyState:
    c1: ScalarField
    c2: ScalarField
    phi: ScalarField
    residual_poisson: float
    residual_np1: float
    residual_np2: float
    sweeps: int = 0
    ubstar_report: dict | None = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.c1.grid

    @property
    def rho(self) -> ScalarField:
        return ScalarField(self.grid, self.c1.values - self.c2.values)

    def as_state(self):
        """View as a quiescent time-dependent state (t = +inf)."""
        from .grid import VectorField
        from .transport import State

        return State(math.inf, self.c1.copy(), self.c2.copy(), VectorField.zeros(self.grid), self.phi.copy())


def boltzmann_params_from_bc(bd: BoundaryData, tol: float = 1e-10) -> BoltzmannParams:
    """Read off (Z1, Z2) when the wall data is of equilibrium type, i.e.
    log gamma1 + W and log gamma2 - W are constant along the boundary."""
    consts = []
    for gamma, sign in ((bd.gamma1, 1.0), (bd.gamma2, -1.0)):
        vals = np.concatenate([
            np.log(gamma.left) + sign * bd.W.left,
            np.log(gamma.right) + sign * bd.W.right,
            np.log(gamma.bottom) + sign * bd.W.bottom,
            np.log(gamma.top) + sign * bd.W.top,
        ])
        if vals.max() - vals.min() > tol * max(1.0, abs(vals.max())):
            raise ValueError("boundary data is not of equilibrium (Boltzmann) type")
        consts.append(vals.mean())
    return BoltzmannParams(Z1=math.exp(-consts[0]), Z2=math.exp(-consts[1]))


def solve_poisson_boltzmann(
    grid: Grid,
    Z: BoltzmannParams,
    W: BoundaryTrace,
    eps: float,
    tol: float = 1e-10,
    max_iter: int = 60,
    on_iterate=None,
) -> tuple[ScalarField, SolverReport]:
    """Damped Newton solve of the discrete Poisson-Boltzmann equation.

    on_iterate, when given, is called after every accepted step with
    (iteration, energy, residual_l2) so callers can observe the monotone
    energy descent that the Armijo damping guarantees.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    A = laplacian_matrix(grid)
    b = boundary_rhs(grid, W).ravel(order="F")
    phi = harmonic_extension(grid, W).values.ravel(order="F")
    iZ1, iZ2 = 1.0 / Z.Z1, 1.0 / Z.Z2

    def residual(v):
        return eps * (A @ v - b) - iZ1 * np.exp(-v) + iZ2 * np.exp(v)

    def energy(v):
        return 0.5 * eps * v @ (A @ v) - eps * b @ v + np.sum(iZ1 * np.exp(-v) + iZ2 * np.exp(v))

    E = energy(phi)
    R = residual(phi)
    it = 0
    blind = 0
    while np.linalg.norm(R) > tol:
        if it >= max_iter:
            raise NewtonStall(f"Poisson-Boltzmann Newton did not converge in {max_iter} iterations")
        J = (eps * A + sp.diags(iZ1 * np.exp(-phi) + iZ2 * np.exp(phi))).tocsc()
        step = spla.splu(J).solve(-R)
        slope = R @ step  # dE/dalpha at alpha=0 (R is the energy gradient)
        if abs(slope) <= 1e-12 * max(1.0, abs(E)):
            # The attainable decrease is below the resolution of the
            # energy sum, so the Armijo test is blind.  A tiny slope of
            # the convex energy puts us next to the minimum, where full
            # Newton steps are safe; allow a couple to squeeze out the
            # last digits, then stop at the roundoff floor even if an
            # aggressive tol was not met.
            blind += 1
            if blind > 2:
                break
            alpha, E_new = 1.0, energy(phi + step)
        else:
            blind = 0
            alpha = 1.0
            while True:
                E_new = energy(phi + alpha * step)
                if E_new <= E + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
                if alpha < 2.0**-20:
                    raise NewtonStall("Armijo damping floor reached without energy decrease")
        phi = phi + alpha * step
        E = E_new
        R = residual(phi)
        it += 1
        if on_iterate is not None:
            on_iterate(it, float(E), float(np.linalg.norm(R)))
    res = float(np.linalg.norm(R))
    return (
        ScalarField(grid, phi.reshape((grid.nx, grid.ny), order="F")),
        SolverReport(iterations=it, residual_l2=res, converged=True),
    )


def boltzmann_steady_state(grid: Grid, Z: BoltzmannParams, W: BoundaryTrace, eps: float) -> SteadyState:
    """Equilibrium steady state built from the PB potential."""
    phi, report = solve_poisson_boltzmann(grid, Z, W, eps)
    c1 = ScalarField(grid, np.exp(-phi.values) / Z.Z1)
    c2 = ScalarField(grid, np.exp(phi.values) / Z.Z2)
    return SteadyState(
        c1=c1, c2=c2, phi=phi,
        residual_poisson=report.residual_l2,
        residual_np1=0.0,  # SG fluxes vanish identically on Boltzmann profiles
        residual_np2=0.0,
        sweeps=report.iterations,
    )


def _np_residual_inf(grid: Grid, c: np.ndarray, dphi, z: int, D: float, gamma: BoundaryTrace) -> float:
    sys = assemble_sg(grid, dphi, z, D, gamma)
    r = sys.A @ c.ravel(order="F") - sys.b.ravel(order="F")
    return float(np.max(np.abs(r)))


def _gummel_damping(grid: Grid, bd: BoundaryData, eps: float) -> float:
    """Potential-update damping factor that makes the alternation locally
    contractive.

    Linearizing the alternation around a fixed point, a charge
    perturbation responds through the potential with gain about
    2*gamma_hi/(eps*lambda_1) on the slowest Laplacian mode; the damped
    update phi <- phi_old + omega (phi_new - phi_old) then has iteration
    eigenvalues 1 - omega (1 + gain_k), all inside (-1, 1) once
    omega <= 1/(1 + gain_1).
    """
    lam1 = 2.0 * (1.0 - math.cos(math.pi * grid.hx / grid.Lx)) / grid.hx**2
    lam1 += 2.0 * (1.0 - math.cos(math.pi * grid.hy / grid.Ly)) / grid.hy**2
    gain = 2.0 * bd.gamma_hi / (eps * lam1)
    return 1.0 / (1.0 + gain)


def solve_steady_np(
    bd: BoundaryData,
    p: Params,
    grid: Grid,
    tol: float = 1e-8,
    max_sweeps: int = 400,
    init: SteadyState | None = None,
    damping: float | None = None,
) -> SteadyState:
    """Gummel fixed point for the steady drift-diffusion system.

    Alternates (potential solve from the current charge) with (linear SG
    species solves under the frozen potential) until the joint infinity-
    norm residual of all three equations drops below tol.  The potential
    handed to the species solves is under-relaxed by a damping factor
    (automatic when damping is None; see _gummel_damping) because the
    undamped alternation amplifies slow charge modes whenever
    2*gamma_hi/(eps*lambda_1) > 1.  Divergence is declared after 5
    consecutive residual increases; the last iterate is attached to the
    exception for post-mortems.
    """
    if init is not None:
        c1 = init.c1.values.copy()
        c2 = init.c2.values.copy()
    else:
        c1 = harmonic_extension(grid, bd.gamma1).values
        c2 = harmonic_extension(grid, bd.gamma2).values
    if damping is None:
        damping = _gummel_damping(grid, bd, p.eps)
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")

    A_lap = laplacian_matrix(grid)
    bW = boundary_rhs(grid, bd.W).ravel(order="F")
    history: list[float] = []
    increases = 0
    phi_used = None

    for sweep in range(1, max_sweeps + 1):
        rho = ScalarField(grid, c1 - c2)
        phi, _ = solve_potential(rho, bd.W, p.eps)
        if phi_used is None:
            phi_used = phi.values
        else:
            phi_used = phi_used + damping * (phi.values - phi_used)
        dphi = face_jumps(phi_used, bd.W, grid)
        for species, gamma in ((1, bd.gamma1), (2, bd.gamma2)):
            sys = assemble_sg(grid, dphi, p.z(species), p.D(species), gamma)
            try:
                sol = spla.splu(sys.A.tocsc()).solve(sys.b.ravel(order="F"))
            except RuntimeError as exc:  # overflowed drift degenerates the matrix
                raise GummelDivergence(
                    f"species solve broke down at sweep {sweep}: {exc}",
                    last_iterate=(c1, c2, phi_used),
                    residuals=history,
                ) from exc
            if species == 1:
                c1 = sol.reshape((grid.nx, grid.ny), order="F")
            else:
                c2 = sol.reshape((grid.nx, grid.ny), order="F")
        finite = np.isfinite(c1).all() and np.isfinite(c2).all()
        if not finite or min(c1.min(), c2.min()) <= 0:
            raise GummelDivergence(
                "Gummel iterate lost positivity",
                last_iterate=(c1, c2, phi.values),
                residuals=history,
            )
        # residuals with the potential refreshed from the new charge
        rho = ScalarField(grid, c1 - c2)
        phi, _ = solve_potential(rho, bd.W, p.eps)
        dphi = face_jumps(phi.values, bd.W, grid)
        res_p = float(
            np.max(np.abs(p.eps * (A_lap @ phi.values.ravel(order="F") - bW) - rho.values.ravel(order="F")))
        )
        res_1 = _np_residual_inf(grid, c1, dphi, p.z1, p.D1, bd.gamma1)
        res_2 = _np_residual_inf(grid, c2, dphi, p.z2, p.D2, bd.gamma2)
        joint = max(res_p, res_1, res_2)
        if history and joint > history[-1] * (1.0 + 1e-12):
            increases += 1
            if increases >= 5:
                raise GummelDivergence(
                    f"residual increased over 5 consecutive sweeps (last {joint:.3e})",
                    last_iterate=(c1, c2, phi.values),
                    residuals=history + [joint],
                )
        else:
            increases = 0
        history.append(joint)
        if joint <= tol:
            out = SteadyState(
                c1=ScalarField(grid, c1),
                c2=ScalarField(grid, c2),
                phi=phi,
                residual_poisson=res_p,
                residual_np1=res_1,
                residual_np2=res_2,
                sweeps=sweep,
            )
            out.ubstar_report = verify_ubstar(out, bd, p)
            return out

    raise GummelDivergence(
        f"no convergence in {max_sweeps} sweeps (residual {history[-1]:.3e})",
        last_iterate=(c1, c2, phi.values if phi is not None else None),
        residuals=history,
    )


def verify_ubstar(s: SteadyState, bd: BoundaryData, p: Params) -> dict:
    """Evaluate the three a priori steady-state bound families cellwise.

    1. Slotboom confinement: lam_i <= c_i* e^{z_i Phi*} <= Lam_i with
       lam_i/Lam_i the boundary extremes of gamma_i e^{z_i W};
    2. gamma-range confinement: gamma_lo <= c_i* <= gamma_hi;
    3. potential window: min(inf W, log sqrt(lam1/Lam2)) <= Phi* <=
       max(sup W, log sqrt(Lam1/lam2)).

    Violations are reported with their worst margin and cell, never
    raised; margins are slackened by 1e-8.
    """
    slack = 1e-8
    grid = s.grid
    report: dict = {}

    def extremes(gamma: BoundaryTrace, sign: float):
        vals = np.concatenate([
            gamma.left * np.exp(sign * bd.W.left),
            gamma.right * np.exp(sign * bd.W.right),
            gamma.bottom * np.exp(sign * bd.W.bottom),
            gamma.top * np.exp(sign * bd.W.top),
        ])
        return float(vals.min()), float(vals.max())

    lam1, Lam1 = extremes(bd.gamma1, 1.0)
    lam2, Lam2 = extremes(bd.gamma2, -1.0)

    def check(name, low, values, high):
        margin_lo = values - low
        margin_hi = high - values
        worst = min(float(margin_lo.min()), float(margin_hi.min()))
        i, j = np.unravel_index(
            np.argmin(np.minimum(margin_lo, margin_hi)), values.shape
        )
        report[name] = {
            "passed": bool(worst >= -slack),
            "worst_margin": worst,
            "worst_cell": (int(i), int(j)),
        }

    eta1 = s.c1.values * np.exp(s.phi.values)
    eta2 = s.c2.values * np.exp(-s.phi.values)
    check("slotboom_c1", lam1, eta1, Lam1)
    check("slotboom_c2", lam2, eta2, Lam2)
    check("gamma_range_c1", bd.gamma_lo, s.c1.values, bd.gamma_hi)
    check("gamma_range_c2", bd.gamma_lo, s.c2.values, bd.gamma_hi)
    w_all = np.concatenate([bd.W.left, bd.W.right, bd.W.bottom, bd.W.top])
    phi_lo = min(float(w_all.min()), 0.5 * math.log(lam1 / Lam2))
    phi_hi = max(float(w_all.max()), 0.5 * math.log(Lam1 / lam2))
    check("potential_window", phi_lo, s.phi.values, phi_hi)
    report["all_passed"] = all(v["passed"] for k, v in report.items() if isinstance(v, dict))
    return report
