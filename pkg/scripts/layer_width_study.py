#!/usr/bin/env python3
"""Boundary-layer thickness of equilibrium steady states.

Solves the equilibrium potential problem under a wall bias for a ladder
of eps values (grids refined to keep the layer resolved), measures the
distance over which the midline charge density decays to half its wall
value, and fits the growth law width ~ eps^p.  The expected p is 1/2.

Usage: python3 scripts/layer_width_study.py
"""

import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from npslab.grid import BoundaryTrace, Grid  # noqa: E402
from npslab.steady import BoltzmannParams, boltzmann_steady_state  # noqa: E402


def half_decay_width(grid, rho_row):
    wall = abs(rho_row[0])
    below = np.nonzero(np.abs(rho_row) < 0.5 * wall)[0]
    if below.size == 0:
        return math.nan
    return grid.xc()[below[0]]


def main():
    eps_values = [6.4e-2, 1.6e-2, 4e-3, 1e-3]
    widths = []
    print(f"{'eps':>10} {'grid':>6} {'width':>10} {'width/sqrt(eps)':>16}")
    for eps in eps_values:
        n = int(np.ceil(6.0 / math.sqrt(eps) / 16.0)) * 16
        grid = Grid(nx=n, ny=n)
        W = BoundaryTrace.from_function(grid, lambda x, y: 1.0 - 2.0 * x)
        s = boltzmann_steady_state(grid, BoltzmannParams(1.0, 1.0), W, eps)
        w = half_decay_width(grid, s.rho.values[:, grid.ny // 2])
        widths.append(w)
        print(f"{eps:10.2e} {n:4d}^2 {w:10.4e} {w / math.sqrt(eps):16.4f}")

    slope = np.polyfit(np.log(eps_values), np.log(widths), 1)[0]
    print(f"\nfitted width ~ eps^{slope:.3f}   (diffuse-layer scaling: 0.5)")


if __name__ == "__main__":
    main()
