"""Manufactured smooth solutions with symbolically derived forcing.

A closed-form field set (c1, c2, Phi, u from a stream function) is
substituted into the coupled equations symbolically; the residuals become
source terms handed to the time stepper, so the discrete solution can be
compared against the exact fields on a grid/step ladder.

The stream function sin^2 * sin^2 vanishes to first order at every wall,
so the exact velocity is no-slip; the concentration/potential bumps
vanish at the walls, so the Dirichlet data are the constant backgrounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy

from .elliptic import solve_potential
from .grid import BoundaryData, Grid, ScalarField, VectorField
from .sim import ManufacturedSources
from .transport import Params, State


def _lambdify(expr, symbols):
    f = sympy.lambdify(symbols, expr, modules="numpy")

    def call(X, Y, t):
        return np.broadcast_to(np.asarray(f(X, Y, t), dtype=float), X.shape).copy()

    return call


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact fields and matching sources for one parameter set."""

    grid: Grid
    p: Params
    c1_fn: Callable
    c2_fn: Callable
    phi_fn: Callable
    ux_fn: Callable
    uy_fn: Callable
    s1_fn: Callable
    s2_fn: Callable
    gphi_fn: Callable
    fx_fn: Callable
    fy_fn: Callable
    gamma1: float
    gamma2: float
    w0: float

    @classmethod
    def build(
        cls,
        grid: Grid,
        p: Params,
        gamma1: float = 1.5,
        gamma2: float = 1.5,
        w0: float = 0.0,
        amp_c1: float = 0.25,
        amp_c2: float = 0.20,
        amp_phi: float = 0.30,
        amp_psi: float = 0.02,
        rate: float = 1.0,
    ) -> "ManufacturedCase":
        x, y, t = sympy.symbols("x y t")
        sx = sympy.pi * x / grid.Lx
        sy = sympy.pi * y / grid.Ly
        theta = sympy.exp(-rate * t)

        c1 = gamma1 + amp_c1 * sympy.sin(sx) * sympy.sin(sy) * theta
        c2 = gamma2 + amp_c2 * sympy.sin(2 * sx) * sympy.sin(sy) * theta
        phi = w0 + amp_phi * sympy.sin(sx) * sympy.sin(2 * sy) * theta
        psi = amp_psi * sympy.sin(sx) ** 2 * sympy.sin(sy) ** 2 * theta
        ux = sympy.diff(psi, y)
        uy = -sympy.diff(psi, x)

        def div(fx, fy):
            return sympy.diff(fx, x) + sympy.diff(fy, y)

        def lap(f):
            return sympy.diff(f, x, 2) + sympy.diff(f, y, 2)

        rho = c1 - c2
        s1 = sympy.diff(c1, t) + div(ux * c1, uy * c1) - p.D1 * div(
            sympy.diff(c1, x) + c1 * sympy.diff(phi, x),
            sympy.diff(c1, y) + c1 * sympy.diff(phi, y),
        )
        s2 = sympy.diff(c2, t) + div(ux * c2, uy * c2) - p.D2 * div(
            sympy.diff(c2, x) - c2 * sympy.diff(phi, x),
            sympy.diff(c2, y) - c2 * sympy.diff(phi, y),
        )
        gphi = -p.eps * lap(phi) - rho
        fx = sympy.diff(ux, t) - p.nu * lap(ux) + p.K * rho * sympy.diff(phi, x)
        fy = sympy.diff(uy, t) - p.nu * lap(uy) + p.K * rho * sympy.diff(phi, y)

        syms = (x, y, t)
        return cls(
            grid=grid, p=p,
            c1_fn=_lambdify(c1, syms), c2_fn=_lambdify(c2, syms),
            phi_fn=_lambdify(phi, syms),
            ux_fn=_lambdify(ux, syms), uy_fn=_lambdify(uy, syms),
            s1_fn=_lambdify(sympy.simplify(s1), syms),
            s2_fn=_lambdify(sympy.simplify(s2), syms),
            gphi_fn=_lambdify(sympy.simplify(gphi), syms),
            fx_fn=_lambdify(sympy.simplify(fx), syms),
            fy_fn=_lambdify(sympy.simplify(fy), syms),
            gamma1=gamma1, gamma2=gamma2, w0=w0,
        )

    def boundary_data(self) -> BoundaryData:
        return BoundaryData.constant(self.grid, gamma1=self.gamma1, gamma2=self.gamma2, W=self.w0)

    def sources(self) -> ManufacturedSources:
        Xc, Yc = self.grid.cell_xy()
        Xf, Yf = self.grid.xface_xy()
        Xg, Yg = self.grid.yface_xy()

        def species(t):
            return self.s1_fn(Xc, Yc, t), self.s2_fn(Xc, Yc, t)

        def poisson(t):
            return self.gphi_fn(Xc, Yc, t)

        def momentum(t):
            f = VectorField.zeros(self.grid)
            f.ux[...] = self.fx_fn(Xf, Yf, t)
            f.uy[...] = self.fy_fn(Xg, Yg, t)
            f.ux[0, :] = f.ux[-1, :] = 0.0
            f.uy[:, 0] = f.uy[:, -1] = 0.0
            return f

        return ManufacturedSources(species=species, poisson=poisson, momentum=momentum)

    def exact_state(self, t: float, discrete_phi: bool = True) -> State:
        """Exact fields at time t; the potential is the discrete solve of
        the forced Poisson equation when discrete_phi (matching what the
        stepper would carry), else the continuum field."""
        g = self.grid
        Xc, Yc = g.cell_xy()
        c1 = ScalarField(g, self.c1_fn(Xc, Yc, t))
        c2 = ScalarField(g, self.c2_fn(Xc, Yc, t))
        u = VectorField.zeros(g)
        Xf, Yf = g.xface_xy()
        Xg, Yg = g.yface_xy()
        u.ux[...] = self.ux_fn(Xf, Yf, t)
        u.uy[...] = self.uy_fn(Xg, Yg, t)
        u.ux[0, :] = u.ux[-1, :] = 0.0
        u.uy[:, 0] = u.uy[:, -1] = 0.0
        if discrete_phi:
            rho_eff = ScalarField(g, c1.values - c2.values + self.gphi_fn(Xc, Yc, t))
            bd = self.boundary_data()
            phi, _ = solve_potential(rho_eff, bd.W, self.p.eps)
        else:
            phi = ScalarField(g, self.phi_fn(Xc, Yc, t))
        return State(t, c1, c2, u, phi)

    def errors(self, state: State) -> dict:
        """Max-norm errors of a computed state against the exact fields."""
        g = self.grid
        t = state.t
        Xc, Yc = g.cell_xy()
        Xf, Yf = g.xface_xy()
        Xg, Yg = g.yface_xy()
        e_c1 = float(np.max(np.abs(state.c1.values - self.c1_fn(Xc, Yc, t))))
        e_c2 = float(np.max(np.abs(state.c2.values - self.c2_fn(Xc, Yc, t))))
        e_phi = float(np.max(np.abs(state.phi.values - self.phi_fn(Xc, Yc, t))))
        e_ux = np.max(np.abs(state.u.ux[1:-1, :] - self.ux_fn(Xf, Yf, t)[1:-1, :]))
        e_uy = np.max(np.abs(state.u.uy[:, 1:-1] - self.uy_fn(Xg, Yg, t)[:, 1:-1]))
        return {"c1": e_c1, "c2": e_c2, "phi": e_phi, "u": float(max(e_ux, e_uy))}


def fitted_order(hs, errs) -> float:
    """Least-squares slope of log(err) vs log(h)."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
