"""Scalar kernels shared by the transport, steady, and diagnostics modules.

All functions are vectorized over numpy arrays and carry series branches
near their removable singularities so they are smooth to machine precision
across the branch switch.
"""

from __future__ import annotations

import numpy as np


def bernoulli(s):
    """B(s) = s / (e^s - 1) with B(0) = 1.

    Series branch for |s| < 1e-5; the large-|s| limits (0 and -s) fall out
    of the exact formula without overflow.
    """
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < 1e-5
    safe = np.where(small, 1.0, s)
    with np.errstate(over="ignore", invalid="ignore"):
        direct = safe / np.expm1(safe)
    series = 1.0 - s / 2.0 + s * s / 12.0 - s**4 / 720.0
    return np.where(small, series, direct)


def dbernoulli(s):
    """Derivative B'(s), with the same branch discipline as bernoulli."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < 1e-4
    pos = s >= 0.0
    safe = np.where(small, 1.0, s)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # s > 0: multiply through by e^{-2s} so nothing overflows
        e = np.exp(-np.abs(safe))
        num_pos = e - e * e - safe * e
        den_pos = (1.0 - e) ** 2
        # s < 0: e^s <= 1, direct evaluation is stable
        em = np.expm1(safe)
        num_neg = em - safe * np.exp(safe)
        den_neg = em * em
        direct = np.where(pos, num_pos / den_pos, num_neg / den_neg)
    series = -0.5 + s / 6.0 - s**3 / 180.0
    return np.where(small, series, direct)


def logmean(a, b):
    """Logarithmic mean (a - b)/(log a - log b) for positive a, b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = 0.5 * (a + b)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = (a - b) / (a + b)
    small = np.abs(tau) < 1e-4
    ratio = np.where(small, 2.0, a / b)
    direct = (a - b) / np.log(ratio)
    series = m * (1.0 - tau * tau / 3.0)
    return np.where(small, series, direct)


def dlogmean(a, b):
    """Partial derivatives (dL/da, dL/db) of the logarithmic mean."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = (a - b) / (a + b)
    small = np.abs(tau) < 1e-4
    safe_a = np.where(small, 1.0, a)
    safe_b = np.where(small, 1.0, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log(safe_a / safe_b)
        d = safe_a - safe_b
        da_direct = (r - d / safe_a) / (r * r)
        db_direct = (d / safe_b - r) / (r * r)
    da_series = 0.5 - tau / 3.0 + tau * tau / 6.0
    db_series = 0.5 + tau / 3.0 + tau * tau / 6.0
    return (
        np.where(small, da_series, da_direct),
        np.where(small, db_series, db_direct),
    )


def psi_entropy(s):
    """psi(s) = s log s - s + 1, evaluated stably near s = 1 (psi >= 0)."""
    s = np.asarray(s, dtype=float)
    e = s - 1.0
    near = np.abs(e) < 0.5
    safe = np.where(s > 0, s, 1.0)
    stable = (1.0 + e) * np.log1p(np.where(near, e, 0.0)) - e
    direct = safe * np.log(safe) - safe + 1.0
    return np.where(near, stable, direct)


def minmod(a, b):
    """Slope limiter: 0 on sign disagreement, else the smaller magnitude."""
    return 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))
