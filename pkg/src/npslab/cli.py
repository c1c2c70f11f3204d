"""Batch command-line front end.

Subcommands: run | sweep-eps | steady | tangent-dim | pair-diff |
convergence.  Each reads a YAML config, writes CSVs/checkpoints into
--out, and exits 0 on success, 2 on config errors, 3 on solver failures,
4 when --check finds a threshold violated.  Reruns with the same config
produce byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import dirichlet_quotient, electroneutrality_average, post_transient_index
from .errors import ConfigError, NpslabError
from .fluid import StokesWorkspace
from .grid import BoundaryData, BoundaryTrace, Grid, ScalarField, VectorField
from .sim import TimeControls, checkpoint_save, coupled_step, run
from .steady import boltzmann_params_from_bc, boltzmann_steady_state, solve_steady_np
from .tangent import TangentBundle, dimension_bound, dimension_table_csv, evolve_bundle
from .transport import Params, make_state

_SAFE_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "sqrt": np.sqrt, "log": np.log, "tanh": np.tanh, "abs": np.abs,
    "pi": np.pi,
}


def _eval_expr(expr: str, key: str, **variables):
    try:
        return eval(  # config expressions run in a bare namespace
            compile(expr, f"<config:{key}>", "eval"),
            {"__builtins__": {}},
            {**_SAFE_FUNCS, **variables},
        )
    except Exception as exc:
        raise ConfigError(f"{key}: cannot evaluate {expr!r}: {exc}") from exc


def _get(cfg: dict, path: str, default=None, required: bool = False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(f"missing required config key: {path}")
            return default
        node = node[part]
    return node


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def build_grid(cfg: dict) -> Grid:
    try:
        return Grid(
            nx=int(_get(cfg, "grid.nx", required=True)),
            ny=int(_get(cfg, "grid.ny", required=True)),
            Lx=float(_get(cfg, "grid.Lx", 1.0)),
            Ly=float(_get(cfg, "grid.Ly", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def build_params(cfg: dict) -> Params:
    try:
        return Params(
            eps=float(_get(cfg, "params.eps", required=True)),
            D1=float(_get(cfg, "params.D1", required=True)),
            D2=float(_get(cfg, "params.D2", required=True)),
            nu=float(_get(cfg, "params.nu", required=True)),
            K=float(_get(cfg, "params.K", required=True)),
            delta=float(_get(cfg, "params.delta", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc


def _build_trace(grid: Grid, value, key: str) -> BoundaryTrace:
    """scalar | per-side mapping; sides may be exprs in the arc coord s."""
    if isinstance(value, (int, float)):
        return BoundaryTrace.constant(grid, float(value))
    if isinstance(value, str):
        sides = {side: value for side in ("left", "right", "bottom", "top")}
    elif isinstance(value, dict):
        unknown = set(value) - {"left", "right", "bottom", "top"}
        if unknown:
            raise ConfigError(f"{key}: unknown sides {sorted(unknown)}")
        sides = {side: value.get(side, 0.0) for side in ("left", "right", "bottom", "top")}
    else:
        raise ConfigError(f"{key}: expected scalar, expr string, or per-side mapping")

    coords = {"left": grid.yc(), "right": grid.yc(), "bottom": grid.xc(), "top": grid.xc()}
    arrays = {}
    for side, sval in sides.items():
        if isinstance(sval, str):
            arr = _eval_expr(sval, f"{key}.{side}", s=coords[side])
        else:
            arr = float(sval)
        arrays[side] = np.broadcast_to(np.asarray(arr, dtype=float), coords[side].shape).copy()
    return BoundaryTrace(**arrays)


def build_bc(cfg: dict, grid: Grid) -> BoundaryData:
    try:
        return BoundaryData(
            gamma1=_build_trace(grid, _get(cfg, "bc.gamma1", required=True), "bc.gamma1"),
            gamma2=_build_trace(grid, _get(cfg, "bc.gamma2", required=True), "bc.gamma2"),
            W=_build_trace(grid, _get(cfg, "bc.W", 0.0), "bc.W"),
        )
    except ValueError as exc:
        raise ConfigError(f"bc: {exc}") from exc


def _cell_expr(grid: Grid, value, key: str) -> np.ndarray:
    X, Y = grid.cell_xy()
    if isinstance(value, str):
        arr = _eval_expr(value, key, x=X, y=Y)
    else:
        arr = float(value)
    return np.broadcast_to(np.asarray(arr, dtype=float), X.shape).copy()


def build_state(cfg: dict, grid: Grid, bd: BoundaryData, p: Params, section: str = "init"):
    c1 = _cell_expr(grid, _get(cfg, f"{section}.c1", required=True), f"{section}.c1")
    c2 = _cell_expr(grid, _get(cfg, f"{section}.c2", required=True), f"{section}.c2")
    if c1.min() <= 0 or c2.min() <= 0:
        raise ConfigError(f"{section}: initial concentrations must be positive")
    stream = _get(cfg, f"{section}.stream", None)
    if stream is None:
        u = VectorField.zeros(grid)
    else:
        xn = np.arange(grid.nx + 1) * grid.hx
        yn = np.arange(grid.ny + 1) * grid.hy
        Xn, Yn = np.meshgrid(xn, yn, indexing="ij")
        if isinstance(stream, str):
            psi = _eval_expr(stream, f"{section}.stream", x=Xn, y=Yn)
        else:
            psi = float(stream)
        psi = np.broadcast_to(np.asarray(psi, dtype=float), Xn.shape).copy()
        u = VectorField.from_stream(grid, psi)
    return make_state(0.0, ScalarField(grid, c1), ScalarField(grid, c2), u, bd, p)


def build_time_controls(cfg: dict) -> TimeControls:
    try:
        return TimeControls(
            t_end=float(_get(cfg, "time.t_end", required=True)),
            dt=(lambda v: None if v is None else float(v))(_get(cfg, "time.dt", None)),
            dt_max=float(_get(cfg, "time.dt_max", 1e-2)),
            cfl_safety=float(_get(cfg, "time.cfl_safety", 0.45)),
            cfl_drift=float(_get(cfg, "time.cfl_drift", 1.2)),
            strict_envelope=bool(_get(cfg, "time.strict_envelope", False)),
            sample_interval=float(_get(cfg, "time.sample_interval", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"time: {exc}") from exc


def _advection(cfg: dict) -> str:
    adv = _get(cfg, "transport.advection", "muscl")
    if adv not in ("muscl", "upwind1"):
        raise ConfigError(f"transport.advection must be muscl or upwind1, got {adv!r}")
    return adv


def _attach_steady(cfg, grid, bd, p):
    """Build the Boltzmann steady state when the BCs are equilibrium-type
    (enables the relative-entropy CSV columns); None otherwise."""
    try:
        Z = boltzmann_params_from_bc(bd)
    except ValueError:
        return None
    return boltzmann_steady_state(grid, Z, bd.W, p.eps).as_state()


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid(cfg)
    p = build_params(cfg)
    bd = build_bc(cfg, grid)
    state = build_state(cfg, grid, bd, p)
    tc = build_time_controls(cfg)
    steady = _attach_steady(cfg, grid, bd, p)
    result = run(state, bd, p, tc, advection=_advection(cfg), steady=steady)
    out = _outdir(args)
    result.history.to_csv(out / "trajectory.csv")
    checkpoint_save(out / "final.ckpt", result.state, eps=p.eps)
    print(f"run: {result.steps} steps, {result.retries} retries, t={result.state.t:g}")

    if args.check:
        m = result.history.column("m")
        M = result.history.column("M")
        lo = min(m[0], bd.gamma_lo) - 1e-10
        hi = max(M[0], bd.gamma_hi) + 1e-10
        if m.min() < lo or M.max() > hi:
            print(f"check failed: envelopes left [{lo}, {hi}]", file=sys.stderr)
            return 4
        print("check passed: envelopes confined")
    return 0


def _sweep_member(cfg: dict, grid_n: int, eps: float, outdir: Path, advection: str):
    member = {**cfg, "grid": {**cfg["grid"], "nx": grid_n, "ny": grid_n},
              "params": {**cfg["params"], "eps": eps}}
    grid = build_grid(member)
    if math.sqrt(eps) < 4.0 * max(grid.hx, grid.hy):
        raise ConfigError(
            f"sweep: eps={eps:g} under-resolved on a {grid_n}x{grid_n} grid "
            f"(interface width sqrt(eps) spans < 4 cells)"
        )
    p = build_params(member)
    bd = build_bc(member, grid)
    state = build_state(member, grid, bd, p)
    tc = build_time_controls(member)
    result = run(state, bd, p, tc, advection=advection)
    result.history.to_csv(outdir / f"sweep_{eps:g}.csv")
    return result.history, tc.t_end


def cmd_sweep_eps(args) -> int:
    cfg = load_config(args.config)
    eps_values = _get(cfg, "sweep.eps_values", required=True)
    grids = _get(cfg, "sweep.grids", required=True)
    if len(eps_values) < 3:
        raise ConfigError("sweep.eps_values needs at least 3 entries")
    if any(e <= 0 for e in eps_values) or any(
        b >= a for a, b in zip(eps_values, eps_values[1:])
    ):
        raise ConfigError("sweep.eps_values must be positive and strictly decreasing")
    if len(grids) != len(eps_values):
        raise ConfigError("sweep.grids must align with sweep.eps_values")
    tau = float(_get(cfg, "sweep.tau", 1.0))
    t_end = float(_get(cfg, "time.t_end", required=True))
    if tau >= t_end:
        raise ConfigError("sweep.tau must leave room inside [0, t_end]")
    advection = _advection(cfg)
    out = _outdir(args)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        futures = [
            pool.submit(_sweep_member, cfg, int(n), float(e), out, advection)
            for n, e in zip(grids, eps_values)
        ]
        results = [f.result() for f in futures]

    rows = []
    for (hist, te), eps in zip(results, eps_values):
        if tau < eps ** (2.0 / 3.0):
            raise ConfigError(f"sweep.tau={tau:g} below eps^(2/3) for eps={eps:g}")
        t = hist.column("t")
        t_pt = t[post_transient_index(hist)]
        T = min(t_pt, te - tau)
        avg = electroneutrality_average(hist, T, tau)
        post = t >= T
        sup_gphi = float(np.max(hist.column("grad_phi_l2")[post])) * math.sqrt(eps)
        sup_u = float(np.max(np.sqrt(2.0 * hist.column("kinetic")[post])))
        rows.append([eps, avg, sup_gphi, sup_u])

    avgs = [r[1] for r in rows]
    slope = float(np.polyfit(np.log([r[0] for r in rows]), np.log(avgs), 1)[0])
    B1 = avgs[0] / eps_values[0] ** (1.0 / 3.0)
    with open(out / "summary.csv", "w", newline="\n") as fh:
        fh.write("eps,nx,rho_l2_avg,grad_phi_sup_scaled,u_l2_sup,monotone_ok,fit_slope\n")
        for i, (r, n) in enumerate(zip(rows, grids)):
            mono = 1 if i == 0 or r[1] < rows[i - 1][1] else 0
            fh.write(
                f"{repr(r[0])},{n},{repr(r[1])},{repr(r[2])},{repr(r[3])},{mono},{repr(slope)}\n"
            )
    print(f"sweep: slope={slope:.4f}, B1={B1:.4g}")

    if args.check:
        ok = slope >= (1.0 / 3.0 - 0.1)
        ok &= all(a < b for a, b in zip(avgs[1:], avgs[:-1]))
        ok &= all(a <= B1 * e ** (1.0 / 3.0) * (1 + 1e-9) for e, a in zip(eps_values[1:], avgs[1:]))
        ok &= all(r[2] <= 2.0 * rows[0][2] for r in rows[1:])
        us = [r[3] for r in rows]
        ok &= max(us) < 2.0 * min(us) if min(us) > 0 else True
        if not ok:
            print("check failed: scaling thresholds violated", file=sys.stderr)
            return 4
        print("check passed: electroneutrality scaling and uniform bounds")
    return 0


def cmd_steady(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid(cfg)
    p = build_params(cfg)
    bd = build_bc(cfg, grid)
    s = solve_steady_np(bd, p, grid)
    out = _outdir(args)
    checkpoint_save(out / "steady.ckpt", s.as_state(), eps=p.eps, steady=True)
    report = s.ubstar_report or {}
    with open(out / "steady_report.csv", "w", newline="\n") as fh:
        fh.write("check,passed,worst_margin,cell_i,cell_j\n")
        for name, entry in report.items():
            if isinstance(entry, dict):
                fh.write(
                    f"{name},{int(entry['passed'])},{repr(entry['worst_margin'])},"
                    f"{entry['worst_cell'][0]},{entry['worst_cell'][1]}\n"
                )
    print(
        f"steady: {s.sweeps} sweeps, residuals "
        f"poisson={s.residual_poisson:.2e} np=({s.residual_np1:.2e}, {s.residual_np2:.2e})"
    )
    if args.check:
        if not report.get("all_passed", False):
            print("check failed: steady-state bounds violated", file=sys.stderr)
            return 4
        print("check passed: steady-state bounds hold")
    return 0


def cmd_tangent_dim(args) -> int:
    cfg = load_config(args.config)
    if _advection(cfg) != "upwind1":
        raise ConfigError("tangent-dim requires transport.advection: upwind1")
    tc = build_time_controls(cfg)
    if tc.dt is None:
        raise ConfigError("tangent-dim requires a fixed time.dt")
    grid = build_grid(cfg)
    p = build_params(cfg)
    bd = build_bc(cfg, grid)
    state = build_state(cfg, grid, bd, p)
    modes = int(_get(cfg, "tangent.modes", 16))
    cadence = int(_get(cfg, "tangent.cadence", 10))
    seed = int(_get(cfg, "seed", 20260815))

    ws = StokesWorkspace(grid, p.nu)
    states = [state]
    n_steps = round(tc.t_end / tc.dt)
    for _ in range(n_steps):
        states.append(coupled_step(states[-1], tc.dt, bd, p, ws, advection="upwind1"))
    bundle = TangentBundle.random(grid, modes, seed=seed)
    evolve_bundle(bundle, states, tc.dt, bd, p, ws=ws, cadence=cadence)
    result = dimension_bound(bundle, N_max=modes)
    out = _outdir(args)
    dimension_table_csv(result, out / "dimension.csv")
    print(f"tangent-dim: N*={result['N_star']}, stabilized={result['stabilized']}")
    if args.check:
        sigma = [row[2] for row in result["table"]]
        if result["N_star"] is None or any(s >= 0 for s in sigma):
            print("check failed: growth rates not uniformly negative", file=sys.stderr)
            return 4
        print("check passed: volume elements decay")
    return 0


def cmd_pair_diff(args) -> int:
    cfg = load_config(args.config)
    tc = build_time_controls(cfg)
    if tc.dt is None:
        raise ConfigError("pair-diff requires a fixed time.dt for aligned outputs")
    grid = build_grid(cfg)
    p = build_params(cfg)
    bd = build_bc(cfg, grid)
    if _get(cfg, "init_b", None) is None:
        raise ConfigError("pair-diff requires an init_b section")
    sA = build_state(cfg, grid, bd, p, section="init")
    sB = build_state(cfg, grid, bd, p, section="init_b")
    advection = _advection(cfg)
    ws = StokesWorkspace(grid, p.nu)

    out = _outdir(args)
    rows = [(0.0, dirichlet_quotient(sA, sB, p))]
    n_steps = round(tc.t_end / tc.dt)
    for _ in range(n_steps):
        sA = coupled_step(sA, tc.dt, bd, p, ws, advection=advection)
        sB = coupled_step(sB, tc.dt, bd, p, ws, advection=advection)
        rows.append((sA.t, dirichlet_quotient(sA, sB, p)))
    with open(out / "pair_diff.csv", "w", newline="\n") as fh:
        fh.write("t,E0,E1,ratio\n")
        for t, q in rows:
            fh.write(
                f"{repr(float(t))},{repr(float(q['E0']))},"
                f"{repr(float(q['E1']))},{repr(float(q['ratio']))}\n"
            )
    ratios = [q["ratio"] for _, q in rows]
    print(f"pair-diff: ratio range [{min(ratios):.4g}, {max(ratios):.4g}]")
    if args.check:
        if not all(np.isfinite(r) for r in ratios) or any(q["E0"] <= 0 for _, q in rows):
            print("check failed: separation collapsed or diverged", file=sys.stderr)
            return 4
        print("check passed: separation stays positive with bounded quotient")
    return 0


def cmd_convergence(args) -> int:
    from .manufactured import ManufacturedCase, fitted_order

    cfg = load_config(args.config)
    p = build_params(cfg)
    grids = [int(n) for n in _get(cfg, "convergence.grids", [32, 64, 128])]
    t_end = float(_get(cfg, "convergence.t_end", 0.25))
    dt_coarse = float(_get(cfg, "convergence.dt_coarse", 2e-3))
    temporal_grid = int(_get(cfg, "convergence.temporal_grid", 48))
    temporal_dts = [float(d) for d in _get(cfg, "convergence.temporal_dts", [8e-3, 4e-3, 2e-3, 1e-3])]
    out = _outdir(args)

    spatial_rows = []
    hs = []
    for n in grids:
        grid = Grid(nx=n, ny=n, Lx=1.0, Ly=1.0)
        case = ManufacturedCase.build(grid, p)
        bd = case.boundary_data()
        state = case.exact_state(0.0)
        dt = dt_coarse * (grids[0] / n) ** 2
        tc = TimeControls(t_end=t_end, dt=dt)
        result = run(state, bd, p, tc, sources=case.sources())
        err = case.errors(result.state)
        hs.append(grid.hx)
        spatial_rows.append((n, grid.hx, err))

    orders = {
        q: fitted_order(hs, [r[2][q] for r in spatial_rows]) for q in ("c1", "c2", "phi", "u")
    }

    grid = Grid(nx=temporal_grid, ny=temporal_grid, Lx=1.0, Ly=1.0)
    case = ManufacturedCase.build(grid, p)
    bd = case.boundary_data()
    finals = []
    for dt in temporal_dts:
        tc = TimeControls(t_end=t_end, dt=dt)
        result = run(case.exact_state(0.0), bd, p, tc, sources=case.sources())
        finals.append(result.state)
    diffs = [
        float(np.max(np.abs(a.c1.values - b.c1.values)))
        for a, b in zip(finals[:-1], finals[1:])
    ]
    t_orders = [math.log2(d0 / d1) for d0, d1 in zip(diffs[:-1], diffs[1:])]
    temporal_order = float(np.mean(t_orders))

    with open(out / "convergence.csv", "w", newline="\n") as fh:
        fh.write("study,param,err_c1,err_c2,err_phi,err_u\n")
        for n, h, err in spatial_rows:
            fh.write(
                f"spatial,{repr(h)},{repr(err['c1'])},{repr(err['c2'])},"
                f"{repr(err['phi'])},{repr(err['u'])}\n"
            )
        for dt, d in zip(temporal_dts[:-1], diffs):
            fh.write(f"temporal,{repr(dt)},{repr(d)},nan,nan,nan\n")
    with open(out / "orders.csv", "w", newline="\n") as fh:
        fh.write("quantity,order\n")
        for q, o in orders.items():
            fh.write(f"{q},{repr(o)}\n")
        fh.write(f"temporal,{repr(temporal_order)}\n")
    print(
        "convergence: orders "
        + ", ".join(f"{q}={o:.2f}" for q, o in orders.items())
        + f", temporal={temporal_order:.2f}"
    )
    if args.check:
        ok = all(1.7 <= orders[q] <= 2.5 for q in ("c1", "c2", "phi"))
        ok &= orders["u"] >= 1.0
        ok &= 0.8 <= temporal_order <= 1.2
        if not ok:
            print("check failed: convergence orders out of range", file=sys.stderr)
            return 4
        print("check passed: convergence orders in range")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="npslab",
        description="Electrodiffusion–Stokes numerical laboratory (batch experiments)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "run": cmd_run,
        "sweep-eps": cmd_sweep_eps,
        "steady": cmd_steady,
        "tangent-dim": cmd_tangent_dim,
        "pair-diff": cmd_pair_diff,
        "convergence": cmd_convergence,
    }
    for name in commands:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML experiment config")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--check", action="store_true", help="enforce acceptance thresholds (exit 4 on failure)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    args = parser.parse_args(argv)

    try:
        return commands[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NpslabError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
