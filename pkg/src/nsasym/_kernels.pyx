# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled triad kernels.  Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def convolve(double[:, ::1] kvec, const cnp.int64_t[::1] t, const cnp.int64_t[::1] p,
             const cnp.int64_t[::1] q, const double complex[:, ::1] uf,
             const double complex[:, ::1] vf):
    cdef Py_ssize_t M = kvec.shape[0], d = kvec.shape[1], T = t.shape[0]
    cdef Py_ssize_t n, a, tt, pp, qq
    cdef double complex kdotu
    out_arr = np.zeros((M, d), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    for n in range(T):
        tt = t[n]
        pp = p[n]
        qq = q[n]
        kdotu = 0
        for a in range(d):
            kdotu = kdotu + kvec[tt, a] * uf[pp, a]
        kdotu = 1j * kdotu
        for a in range(d):
            out[tt, a] = out[tt, a] + kdotu * vf[qq, a]
    return out_arr


def linearize(double[:, ::1] kvec, const cnp.int64_t[::1] t, const cnp.int64_t[::1] p,
              const cnp.int64_t[::1] q, const double complex[:, ::1] vf):
    cdef Py_ssize_t M = kvec.shape[0], d = kvec.shape[1], T = t.shape[0]
    cdef Py_ssize_t N = M * d
    cdef Py_ssize_t n, a, b, tt, pp, qq, col
    cdef double complex kdotv
    L1_arr = np.zeros((N, N), dtype=np.complex128)
    L2_arr = np.zeros((N, N), dtype=np.complex128)
    cdef double complex[:, ::1] L1 = L1_arr
    cdef double complex[:, ::1] L2 = L2_arr
    cdef double complex[:, ::1] Lq
    cdef double complex[:, ::1] Lp
    for n in range(T):
        tt = t[n]
        pp = p[n]
        qq = q[n]
        # conv(v, w): i (k . v_p) w_q
        kdotv = 0
        for a in range(d):
            kdotv = kdotv + kvec[tt, a] * vf[pp, a]
        kdotv = 1j * kdotv
        if qq < M:
            Lq = L1
            col = qq * d
        else:
            Lq = L2
            col = (qq - M) * d
        for b in range(d):
            Lq[tt * d + b, col + b] = Lq[tt * d + b, col + b] + kdotv
        # conv(w, v): i (k . w_p) v_q
        if pp < M:
            Lp = L1
            col = pp * d
        else:
            Lp = L2
            col = (pp - M) * d
        for b in range(d):
            for a in range(d):
                Lp[tt * d + b, col + a] = Lp[tt * d + b, col + a] + 1j * kvec[tt, a] * vf[qq, b]
    return L1_arr, L2_arr
