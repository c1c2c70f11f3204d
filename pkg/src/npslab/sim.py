"""Coupled time integration and checkpointing.

One step of the splitting, from a consistent state (phi solved from rho):

  1. transport both species with the potential and velocity frozen
     (explicit limited upwind advection + implicit Scharfetter-Gummel);
  2. re-solve the potential from the new charge density;
  3. advance Stokes implicitly under the well-balanced electric force
     built from the new concentrations and potential.

Step sizes live on the power-of-two ladder dt_max / 2^k so the implicit
saddle/transport factorizations are reused; the ladder position adapts to
the advective CFL bound and optionally to the strict-envelope bound

    dt <= eps / (2 D_max max(M, gamma_hi)),

under which the implicit drift-diffusion solve provably cannot push a
species outside the running min/max envelope (the drift coefficients are
bounded by the potential curvature, which Poisson ties to M/eps).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .elliptic import solve_potential
from .errors import FormatError, MaxPrincipleViolation, RetryWithSmallerDt
from .fluid import StokesWorkspace, species_electric_force, stokes_step
from .grid import BoundaryData, Grid, ScalarField, VectorField
from .transport import Params, State, np_step


@dataclass(frozen=True)
class ManufacturedSources:
    """Optional forcing terms, each evaluated at the new time level.

    species(t) -> (S1, S2) cell arrays added to the two transport
    equations; poisson(t) -> cell array g added to the charge density in
    the potential solve; momentum(t) -> VectorField added to the Stokes
    force.  Used for convergence studies against manufactured solutions.
    """

    species: Callable[[float], tuple[np.ndarray, np.ndarray]] | None = None
    poisson: Callable[[float], np.ndarray] | None = None
    momentum: Callable[[float], VectorField] | None = None


@dataclass
class TimeControls:
    t_end: float
    dt: float | None = None  # fixed step; disables the adaptive ladder
    dt_max: float = 1e-2
    cfl_safety: float = 0.45
    cfl_drift: float = 1.2  # hysteresis factor before coarsening a rung
    strict_envelope: bool = False
    sample_interval: float = 0.0  # 0 = record every step
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("fixed dt must be positive")
        if self.dt_max <= 0 or self.cfl_safety <= 0 or self.cfl_drift < 1.0:
            raise ValueError("dt_max > 0, cfl_safety > 0, cfl_drift >= 1 required")


def cfl_timestep(u: VectorField, grid: Grid, safety: float) -> float:
    """Advective step bound; +inf for a quiescent field."""
    rate = np.max(np.abs(u.ux)) / grid.hx + np.max(np.abs(u.uy)) / grid.hy
    return math.inf if rate == 0.0 else safety / rate


def envelope_timestep(state: State, bd: BoundaryData, p: Params) -> float:
    """Strict bound under which the implicit transport solve cannot
    enlarge the joint concentration envelope."""
    M = max(float(state.c1.values.max()), float(state.c2.values.max()), bd.gamma_hi)
    return 0.5 * p.eps / (max(p.D1, p.D2) * M)


def coupled_step(
    state: State,
    dt: float,
    bd: BoundaryData,
    p: Params,
    ws: StokesWorkspace,
    advection: str = "muscl",
    envelope_check: bool = True,
    sources: ManufacturedSources | None = None,
) -> State:
    """Advance the full system by one step of the splitting."""
    t_new = state.t + dt
    src_c = sources.species(t_new) if sources is not None and sources.species is not None else None
    c1n, c2n = np_step(
        state, dt, bd, p,
        advection=advection,
        envelope_check=envelope_check,
        sources=src_c,
    )
    rho = ScalarField(state.grid, c1n.values - c2n.values)
    if sources is not None and sources.poisson is not None:
        rho = ScalarField(state.grid, rho.values + sources.poisson(t_new))
    phin, _ = solve_potential(rho, bd.W, p.eps)
    f = species_electric_force(c1n, c2n, phin, p.K)
    if sources is not None and sources.momentum is not None:
        fm = sources.momentum(t_new)
        f = VectorField(state.grid, f.ux + fm.ux, f.uy + fm.uy)
    un, _ = stokes_step(state.u, f, dt, ws)
    return State(t_new, c1n, c2n, un, phin)


@dataclass
class RunResult:
    state: State
    history: "object"  # diagnostics.History
    steps: int
    retries: int
    dt_final: float


def run(
    state: State,
    bd: BoundaryData,
    p: Params,
    tc: TimeControls,
    ws: StokesWorkspace | None = None,
    advection: str = "muscl",
    steady: State | None = None,
    sources: ManufacturedSources | None = None,
    observer: Callable[[State], None] | None = None,
) -> RunResult:
    """Integrate to tc.t_end, sampling diagnostics along the way.

    On a max-principle failure the step is retried on finer ladder rungs
    (up to 8 refinements) before giving up with RetryWithSmallerDt.
    """
    from .diagnostics import History, sample_row

    grid = state.grid
    if ws is None:
        ws = StokesWorkspace(grid, p.nu)
    history = History()

    def record(s: State) -> None:
        history.append(sample_row(s, bd, p, steady=steady))
        if observer is not None:
            observer(s)

    record(state)
    t_end = tc.t_end
    level = 0
    retries = 0
    steps = 0
    next_sample = tc.sample_interval if tc.sample_interval > 0 else 0.0
    dt_used = tc.dt if tc.dt is not None else tc.dt_max

    while state.t < t_end - 1e-12 * max(1.0, t_end):
        if steps >= tc.max_steps:
            raise RetryWithSmallerDt(
                f"exceeded max_steps={tc.max_steps} before reaching t_end", dt_suggested=dt_used
            )
        if tc.dt is not None:
            dt = tc.dt
        else:
            bound = cfl_timestep(state.u, grid, tc.cfl_safety)
            if tc.strict_envelope:
                bound = min(bound, envelope_timestep(state, bd, p))
            bound = min(bound, tc.dt_max)
            while tc.dt_max / 2**level > bound:
                level += 1
            while level > 0 and tc.dt_max / 2 ** (level - 1) * tc.cfl_drift <= bound:
                level -= 1
            dt = tc.dt_max / 2**level
        remaining = t_end - state.t
        if dt > remaining - 1e-14:
            dt = remaining

        for attempt in range(9):
            try:
                new_state = coupled_step(
                    state, dt, bd, p, ws,
                    advection=advection, sources=sources,
                )
                break
            except MaxPrincipleViolation as exc:
                retries += 1
                dt *= 0.5
                if tc.dt is None:
                    level += 1
                if attempt == 8:
                    raise RetryWithSmallerDt(
                        f"step at t={state.t:.6g} failed after 8 halvings: {exc}",
                        dt_suggested=dt,
                    ) from exc
        state = new_state
        dt_used = dt
        steps += 1
        if tc.sample_interval <= 0 or state.t >= next_sample - 1e-12:
            record(state)
            if tc.sample_interval > 0:
                while next_sample <= state.t + 1e-12:
                    next_sample += tc.sample_interval

    if history.column("t")[-1] < state.t - 1e-15:
        record(state)
    return RunResult(state=state, history=history, steps=steps, retries=retries, dt_final=dt_used)


_CKPT_MAGIC = b"NPSCKPT1"
_CKPT_HEADER = struct.Struct("<qqddddB")


def checkpoint_save(path, state: State, eps: float = float("nan"), steady: bool = False) -> None:
    """Write a binary state snapshot (grid shape, extents, time, fields)."""
    g = state.grid
    t = math.inf if steady else state.t
    flags = 1 if steady else 0
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(_CKPT_HEADER.pack(g.nx, g.ny, g.Lx, g.Ly, t, eps, flags))
        for arr in (state.c1.values, state.c2.values, state.phi.values, state.u.ux, state.u.uy):
            fh.write(np.asarray(arr, dtype="<f8").tobytes(order="F"))


def checkpoint_load(path) -> State:
    """Read a snapshot written by checkpoint_save."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(_CKPT_HEADER.size)
        if len(header) != _CKPT_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        nx, ny, Lx, Ly, t, _eps, _flags = _CKPT_HEADER.unpack(header)
        grid = Grid(nx=nx, ny=ny, Lx=Lx, Ly=Ly)

        def read_array(shape):
            n = shape[0] * shape[1] * 8
            buf = fh.read(n)
            if len(buf) != n:
                raise FormatError(f"{path}: truncated field data")
            return np.frombuffer(buf, dtype="<f8").reshape(shape, order="F").copy()

        c1 = ScalarField(grid, read_array((nx, ny)))
        c2 = ScalarField(grid, read_array((nx, ny)))
        phi = ScalarField(grid, read_array((nx, ny)))
        ux = read_array((nx + 1, ny))
        uy = read_array((nx, ny + 1))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after field data")
    return State(t, c1, c2, VectorField(grid, ux, uy), phi)
