"""Observables: energies, entropies, envelopes, time averages.

Everything here is a pure function of states / recorded histories.  The
record layout is frozen; CSV columns appear in exactly this order:

    t, F, P, kinetic, l2_c1, l2_c2, h1_c1, h1_c2, rho_l2_sq,
    rho_l3_cubed, u_V_sq, grad_phi_l2, M, m, E_rel, mu_dissipation

E_rel / mu_dissipation are nan unless a steady state is attached to the
run.  Floats are serialized with repr (shortest round-trip form), which
makes rerun outputs byte-identical.
"""

from __future__ import annotations

import numpy as np

from .elliptic import inv_dirichlet_laplacian
from .errors import IdenticalStates, InsufficientWindow, NonpositiveConcentration
from .grid import (
    BoundaryData,
    ScalarField,
    integrate,
    scalar_h1semi_sq,
    vector_l2_sq,
    vector_v_inner,
)
from .transport import Params, State

CSV_COLUMNS = (
    "t", "F", "P", "kinetic", "l2_c1", "l2_c2", "h1_c1", "h1_c2",
    "rho_l2_sq", "rho_l3_cubed", "u_V_sq", "grad_phi_l2", "M", "m",
    "E_rel", "mu_dissipation",
)


class History:
    """Append-only table of diagnostic rows with fixed columns."""

    def __init__(self, columns: tuple[str, ...] = CSV_COLUMNS):
        self.columns = columns
        self._rows: list[tuple[float, ...]] = []

    def append(self, row: dict) -> None:
        if set(row) != set(self.columns):
            missing = set(self.columns) - set(row)
            extra = set(row) - set(self.columns)
            raise ValueError(f"row keys mismatch: missing {missing}, extra {extra}")
        self._rows.append(tuple(float(row[c]) for c in self.columns))

    def __len__(self) -> int:
        return len(self._rows)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self._rows])

    def row(self, i: int) -> dict:
        return dict(zip(self.columns, self._rows[i]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(self.columns) + "\n")
            for r in self._rows:
                fh.write(",".join(repr(v) for v in r) + "\n")

    @classmethod
    def from_csv(cls, path) -> "History":
        with open(path) as fh:
            header = fh.readline().strip()
            hist = cls(tuple(header.split(",")))
            for line in fh:
                if line.strip():
                    hist._rows.append(tuple(float(v) for v in line.strip().split(",")))
        return hist


def coulomb_energy(rho: ScalarField, eps: float) -> float:
    """(1/2 eps) int rho * (-Lap_D)^{-1} rho, evaluated through the
    gradient form of the solved potential so it is nonnegative by
    construction (the two forms agree identically for this stencil)."""
    phi0 = inv_dirichlet_laplacian(rho)
    return scalar_h1semi_sq(phi0) / (2.0 * eps)


def energy_F(state: State, p: Params) -> float:
    """(1/2K)||u||^2 + Coulomb energy + delta (||c1||^2 + ||c2||^2)."""
    kin = 0.5 * vector_l2_sq(state.u)
    P = coulomb_energy(state.rho, p.eps)
    l2c = integrate(state.c1.values**2, state.grid) + integrate(state.c2.values**2, state.grid)
    return kin / p.K + P + p.delta * l2c


def linf_envelope(state: State) -> dict:
    """Joint two-species extremes: M = max_i sup c_i, m = min_i inf c_i."""
    M = max(float(state.c1.values.max()), float(state.c2.values.max()))
    m = min(float(state.c1.values.min()), float(state.c2.values.min()))
    return {"M": M, "m": m}


def _weighted_grad_sq_zero_trace(g: np.ndarray, w_cell: np.ndarray, w_left, w_right, w_bottom, w_top, grid) -> float:
    """int w |grad g|^2 for zero-trace g, with face weights averaged from
    cells (walls use the supplied boundary weights)."""
    hx, hy, vol = grid.hx, grid.hy, grid.cell_volume
    total = 0.0
    wx = 0.5 * (w_cell[:-1, :] + w_cell[1:, :])
    total += float(np.sum(wx * ((g[1:, :] - g[:-1, :]) / hx) ** 2)) * vol
    wy = 0.5 * (w_cell[:, :-1] + w_cell[:, 1:])
    total += float(np.sum(wy * ((g[:, 1:] - g[:, :-1]) / hy) ** 2)) * vol
    half = hx / 2.0
    total += float(np.sum(0.5 * (w_cell[0, :] + w_left) * (g[0, :] / half) ** 2)) * half * hy
    total += float(np.sum(0.5 * (w_cell[-1, :] + w_right) * (g[-1, :] / half) ** 2)) * half * hy
    half = hy / 2.0
    total += float(np.sum(0.5 * (w_cell[:, 0] + w_bottom) * (g[:, 0] / half) ** 2)) * hx * half
    total += float(np.sum(0.5 * (w_cell[:, -1] + w_top) * (g[:, -1] / half) ** 2)) * hx * half
    return total


def relative_entropy(state: State, steady, p: Params, bd: BoundaryData | None = None) -> dict:
    """Distance to a steady state and its dissipation functional.

    E_rel = sum_i int c_i* psi(c_i/c_i*) + (eps/2)||grad(Phi - Phi*)||^2
            + (1/2K)||u||^2,            psi(s) = s log s - s + 1,
    mu_dissipation = sum_i (D_i/2) int c_i |grad(mu_i - mu_i*)|^2,

    where mu_i = log c_i + z_i Phi.  Both differences have zero trace
    (same boundary data), so one-sided wall gradients close the forms.
    """
    from .numerics import psi_entropy

    grid = state.grid
    c1, c2 = state.c1.values, state.c2.values
    s1, s2 = steady.c1.values, steady.c2.values
    if min(c1.min(), c2.min()) <= 0 or min(s1.min(), s2.min()) <= 0:
        raise NonpositiveConcentration("relative entropy needs strictly positive concentrations")

    ent = integrate(s1 * psi_entropy(c1 / s1) + s2 * psi_entropy(c2 / s2), grid)
    dphi = state.phi.values - steady.phi.values
    e_rel = ent + 0.5 * p.eps * scalar_h1semi_sq(ScalarField(grid, dphi)) + 0.5 * vector_l2_sq(state.u) / p.K

    g1 = np.log(c1 / s1) + dphi
    g2 = np.log(c2 / s2) - dphi
    gamma1, gamma2 = (bd.gamma1, bd.gamma2) if bd is not None else (None, None)

    def wall_weights(c, gamma, side):
        if gamma is None:
            return {"left": c[0, :], "right": c[-1, :], "bottom": c[:, 0], "top": c[:, -1]}[side]
        return getattr(gamma, side)

    dis = 0.0
    for D, g, c, gamma in ((p.D1, g1, c1, gamma1), (p.D2, g2, c2, gamma2)):
        dis += 0.5 * D * _weighted_grad_sq_zero_trace(
            g, c,
            wall_weights(c, gamma, "left"), wall_weights(c, gamma, "right"),
            wall_weights(c, gamma, "bottom"), wall_weights(c, gamma, "top"),
            grid,
        )
    return {"E_rel": e_rel, "mu_dissipation": dis}


def sample_row(state: State, bd: BoundaryData, p: Params, steady=None) -> dict:
    """One diagnostics record for the fixed CSV schema."""
    grid = state.grid
    rho = state.rho
    row = {
        "t": state.t,
        "F": energy_F(state, p),
        "P": coulomb_energy(rho, p.eps),
        "kinetic": 0.5 * vector_l2_sq(state.u),
        "l2_c1": float(np.sqrt(integrate(state.c1.values**2, grid))),
        "l2_c2": float(np.sqrt(integrate(state.c2.values**2, grid))),
        "h1_c1": float(np.sqrt(scalar_h1semi_sq(state.c1, trace=None))),
        "h1_c2": float(np.sqrt(scalar_h1semi_sq(state.c2, trace=None))),
        "rho_l2_sq": integrate(rho.values**2, grid),
        "rho_l3_cubed": integrate(np.abs(rho.values) ** 3, grid),
        "u_V_sq": vector_v_inner(state.u, state.u),
        "grad_phi_l2": float(np.sqrt(scalar_h1semi_sq(state.phi, trace=bd.W))),
    }
    row.update(linf_envelope(state))
    if steady is not None:
        row.update(relative_entropy(state, steady, p, bd=bd))
    else:
        row["E_rel"] = float("nan")
        row["mu_dissipation"] = float("nan")
    return row


def electroneutrality_average(traj: History, T: float, tau: float) -> float:
    """(1/tau) int_T^{T+tau} ||rho(s)||^2_{L2} ds by the trapezoid rule
    over stored rows, linearly interpolated at the window ends."""
    if tau <= 0:
        raise InsufficientWindow("averaging window must have tau > 0")
    t = traj.column("t")
    v = traj.column("rho_l2_sq")
    tol = 1e-9 * max(1.0, abs(T) + tau)
    if len(t) < 2 or t[0] > T + tol or t[-1] < T + tau - tol:
        raise InsufficientWindow(
            f"trajectory [{t[0] if len(t) else 'empty'}, {t[-1] if len(t) else ''}] "
            f"does not cover [{T}, {T + tau}]"
        )
    a, b = T, T + tau
    inside = (t > a) & (t < b)
    knots = np.concatenate([[a], t[inside], [b]])
    vals = np.interp(knots, t, v)
    return float(np.trapezoid(vals, knots) / tau)


def dissipation_residual(traj: History) -> dict:
    """Raw terms of the energy inequality, row by row: centered-difference
    dF/dt plus the nonnegative dissipation/forcing candidates, so a
    fitting script can bound dF/dt + C1 u_V + C2 sum||grad c||^2
    + C3 ||rho||^3 <= C4."""
    n = len(traj)
    if n < 3:
        raise ValueError("need at least 3 rows for centered differences")
    t = traj.column("t")
    F = traj.column("F")
    dF = (F[2:] - F[:-2]) / (t[2:] - t[:-2])
    return {
        "t": t[1:-1],
        "dF_dt": dF,
        "u_V_sq": traj.column("u_V_sq")[1:-1],
        "sum_h1_sq": traj.column("h1_c1")[1:-1] ** 2 + traj.column("h1_c2")[1:-1] ** 2,
        "rho_l3_cubed": traj.column("rho_l3_cubed")[1:-1],
    }


def dirichlet_quotient(wA: State, wB: State, p: Params) -> dict:
    """Backward-uniqueness quotient of two same-BC states.

    E0 = ||d_c1||^2 + ||d_c2||^2 + ||d_u||^2 (plain L2 of differences),
    E1 = D1 ||grad d_c1||^2 + D2 ||grad d_c2||^2 + nu ||d_u||^2_V,
    ratio = E1/E0.  Differences have zero trace, so Dirichlet seminorms
    close with one-sided wall gradients.
    """
    grid = wA.grid
    d1 = ScalarField(grid, wA.c1.values - wB.c1.values)
    d2 = ScalarField(grid, wA.c2.values - wB.c2.values)
    du = wA.u.copy()
    du.ux -= wB.u.ux
    du.uy -= wB.u.uy
    E0 = integrate(d1.values**2, grid) + integrate(d2.values**2, grid) + vector_l2_sq(du)
    if E0 == 0.0:
        raise IdenticalStates("difference of states is identically zero")
    E1 = float(
        p.D1 * scalar_h1semi_sq(d1)
        + p.D2 * scalar_h1semi_sq(d2)
        + p.nu * vector_v_inner(du, du)
    )
    return {"E0": float(E0), "E1": E1, "ratio": E1 / float(E0)}


def post_transient_index(traj: History, fraction: float = 0.10, rel_change: float = 0.01) -> int:
    """First row index after which F changes by less than rel_change over
    a sliding window of the given fraction of the full horizon; falls
    back to the final half if the plateau test never fires."""
    t = traj.column("t")
    F = traj.column("F")
    n = len(t)
    if n < 4:
        return 0
    span = fraction * (t[-1] - t[0])
    scale = max(abs(F[-1]), 1e-300)
    for i in range(n):
        j = np.searchsorted(t, t[i] + span)
        if j >= n:
            break
        window = F[i : j + 1]
        if (window.max() - window.min()) <= rel_change * scale:
            return i
    return n // 2
