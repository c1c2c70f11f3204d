#!/usr/bin/env python3
"""Plot the main diagnostic columns of a trajectory CSV.

Usage: python3 scripts/plot_trajectory.py results/run_electroconvection/trajectory.csv
Writes <name>.png next to the CSV.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required for plotting: pip install matplotlib")

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from npslab.diagnostics import History  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", help="trajectory.csv written by `npslab run`")
    args = ap.parse_args()

    hist = History.from_csv(args.csv)
    t = hist.column("t")

    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    ax = axes[0, 0]
    ax.plot(t, hist.column("F"), label="F")
    ax.plot(t, hist.column("P"), label="P")
    ax.set_ylabel("energy")
    ax.legend()

    ax = axes[0, 1]
    ax.plot(t, np.sqrt(2.0 * hist.column("kinetic")), label="|u|")
    ax.plot(t, hist.column("grad_phi_l2"), label="|grad phi|")
    ax.set_yscale("log")
    ax.legend()

    ax = axes[1, 0]
    ax.plot(t, hist.column("M"), label="max c")
    ax.plot(t, hist.column("m"), label="min c")
    ax.set_xlabel("t")
    ax.set_ylabel("concentration envelope")
    ax.legend()

    ax = axes[1, 1]
    e_rel = hist.column("E_rel")
    if np.any(np.isfinite(e_rel)):
        ax.plot(t, e_rel, label="relative entropy")
        ax.set_yscale("log")
    else:
        ax.plot(t, hist.column("rho_l2_sq"), label="|rho|^2")
    ax.set_xlabel("t")
    ax.legend()

    out = Path(args.csv).with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
