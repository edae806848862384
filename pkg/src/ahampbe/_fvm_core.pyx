# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair loop of the sectional aggregation scheme."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def pair_mass_rates(const double[::1] mass, const double[::1] x, const double[:, ::1] W,
                    const cnp.int64_t[:, ::1] target, double[::1] out):
    """Fill ``out`` with d(mass)/dt per cell; return the mass leak rate.

    Every ordered pair (i, j) collides at rate ``W[i, j] N_i N_j / 2``; the
    newborn mass ``x_i + x_j`` lands in cell ``target[i, j]`` (-1 = leak).
    """
    cdef Py_ssize_t n = mass.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t k
    cdef double Ni, r, leak = 0.0, loss
    cdef double[::1] N = np.empty(n)
    for i in range(n):
        N[i] = mass[i] / x[i]
        out[i] = 0.0
    for i in range(n):
        Ni = N[i]
        if Ni == 0.0:
            continue
        loss = 0.0
        for j in range(n):
            r = 0.5 * W[i, j] * Ni * N[j]
            loss += r
            k = target[i, j]
            if k >= 0:
                out[k] += r * (x[i] + x[j])
            else:
                leak += r * (x[i] + x[j])
        out[i] -= 2.0 * loss * x[i]
    return leak
