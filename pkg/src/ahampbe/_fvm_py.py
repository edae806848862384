"""Numpy fallback for the sectional pair loop (same contract as ``_fvm_core``)."""

import numpy as np


def pair_mass_rates(mass, x, W, target, out):
    N = mass / x
    R = 0.5 * W * np.outer(N, N)
    born = R * (x[:, None] + x[None, :])
    inside = target >= 0
    out[:] = np.bincount(target[inside], weights=born[inside], minlength=len(mass))
    out -= x * N * (W @ N)
    return float(born[~inside].sum())
