# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled delay-angle spectrum denominator kernel.

Same contract as isactrack._spectrum_np.denominator_grid; see that module
for the math.  The loop nest factors the steering vector into its delay and
angle parts and reuses a per-delay antenna Gram matrix, so the heavy inner
dimension (the basis columns) is touched once per delay bin rather than once
per grid cell.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex conj(double complex)
    double creal(double complex)


def denominator_grid(basis, delay_phasors, angle_phasors, bint complement):
    basis = np.ascontiguousarray(basis, dtype=np.complex128)
    delay_phasors = np.ascontiguousarray(delay_phasors, dtype=np.complex128)
    angle_phasors = np.ascontiguousarray(angle_phasors, dtype=np.complex128)

    cdef double complex[:, ::1] bas = basis
    cdef double complex[:, ::1] fgrid = delay_phasors
    cdef double complex[:, ::1] agrid = angle_phasors

    cdef Py_ssize_t dim = bas.shape[0], b_count = bas.shape[1]
    cdef Py_ssize_t n_delays = fgrid.shape[0], n_tones = fgrid.shape[1]
    cdef Py_ssize_t n_angles = agrid.shape[0], p_count = agrid.shape[1]
    if dim != p_count * n_tones:
        raise ValueError(
            f"basis rows {dim} != antenna_count*tone_count {p_count * n_tones}"
        )

    out_arr = np.empty((n_delays, n_angles), dtype=np.float64)
    g_arr = np.empty((p_count, max(b_count, 1)), dtype=np.complex128)
    gram_arr = np.empty((p_count, p_count), dtype=np.complex128)

    cdef double[:, ::1] out = out_arr
    cdef double complex[:, ::1] g = g_arr
    cdef double complex[:, ::1] gram = gram_arr

    cdef Py_ssize_t t, a, p, q, n, b, row
    cdef double complex fv, acc, y
    cdef double dval
    cdef double full_norm = <double> dim

    with nogil:
        for t in range(n_delays):
            for p in range(p_count):
                for b in range(b_count):
                    g[p, b] = 0
                for n in range(n_tones):
                    fv = fgrid[t, n]
                    row = p * n_tones + n
                    for b in range(b_count):
                        g[p, b] = g[p, b] + conj(bas[row, b]) * fv
            for p in range(p_count):
                for q in range(p_count):
                    acc = 0
                    for b in range(b_count):
                        acc = acc + g[p, b] * conj(g[q, b])
                    gram[p, q] = acc
            for a in range(n_angles):
                dval = 0.0
                for p in range(p_count):
                    y = 0
                    for q in range(p_count):
                        y = y + gram[p, q] * conj(agrid[a, q])
                    dval += creal(agrid[a, p] * y)
                out[t, a] = full_norm - dval if complement else dval

    return out_arr
