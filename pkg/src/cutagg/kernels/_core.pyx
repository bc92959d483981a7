# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sign-classification kernels for the fraction quadrature.

Mirrors ``cutagg.kernels.pure`` exactly; outputs are integer counts so the
compiled and pure lanes assemble bitwise-identical fractions.
"""

import numpy as np

NAME = "compiled"


def classify(double[:, ::1] vals):
    cdef Py_ssize_t n = vals.shape[0]
    cdef Py_ssize_t s = vals.shape[1]
    cdef Py_ssize_t i, j
    cdef int saw_neg, saw_pos
    out = np.empty(n, dtype=np.int8)
    cdef signed char[::1] o = out
    for i in range(n):
        saw_neg = 0
        saw_pos = 0
        for j in range(s):
            if vals[i, j] < 0.0:
                saw_neg = 1
            else:
                saw_pos = 1
            if saw_neg and saw_pos:
                break
        if saw_neg and not saw_pos:
            o[i] = 0
        elif saw_pos and not saw_neg:
            o[i] = 1
        else:
            o[i] = 2
    return out


def negatives(double[:, ::1] vals):
    cdef Py_ssize_t n = vals.shape[0]
    cdef Py_ssize_t p = vals.shape[1]
    cdef Py_ssize_t i, j
    cdef long long c
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    for i in range(n):
        c = 0
        for j in range(p):
            if vals[i, j] < 0.0:
                c += 1
        o[i] = c
    return out


def accumulate_pure(signed char[::1] codes, long long[::1] cell_pos,
                    long long amount, long long[::1] out):
    cdef Py_ssize_t i
    for i in range(codes.shape[0]):
        if codes[i] == 0:
            out[cell_pos[i]] += amount


def accumulate_counts(long long[::1] cell_pos, long long[::1] counts,
                      long long[::1] out):
    cdef Py_ssize_t i
    for i in range(cell_pos.shape[0]):
        out[cell_pos[i]] += counts[i]
