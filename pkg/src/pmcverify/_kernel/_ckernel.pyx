# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled polynomial evaluation kernels (see package __init__ for the API)."""

from libc.math cimport fabs

import numpy as np

cimport numpy as cnp


def point_eval(cnp.int32_t[:, :] exps, double[:] coeffs, double[:] point):
    cdef Py_ssize_t m = exps.shape[0]
    cdef Py_ssize_t k = exps.shape[1]
    cdef Py_ssize_t i, j
    cdef int e, t
    cdef double term, acc = 0.0
    for i in range(m):
        term = coeffs[i]
        for j in range(k):
            e = exps[i, j]
            for t in range(e):
                term *= point[j]
        acc += term
    return acc


def interval_eval(cnp.int32_t[:, :] exps, double[:] coeffs, double[:] lo, double[:] hi):
    cdef Py_ssize_t m = exps.shape[0]
    cdef Py_ssize_t k = exps.shape[1]
    cdef Py_ssize_t i, j
    cdef int e, t
    cdef double plo, phi, c, w
    cdef double acc_lo = 0.0
    cdef double acc_hi = 0.0
    for i in range(m):
        plo = 1.0
        phi = 1.0
        for j in range(k):
            e = exps[i, j]
            for t in range(e):
                plo *= lo[j]
                phi *= hi[j]
        c = coeffs[i]
        if c >= 0.0:
            acc_lo += c * plo
            acc_hi += c * phi
        else:
            acc_lo += c * phi
            acc_hi += c * plo
    w = 1e-12 * (1.0 + fabs(acc_lo) + fabs(acc_hi))
    return acc_lo - w, acc_hi + w
