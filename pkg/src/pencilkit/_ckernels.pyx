# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled evaluator for expression programs; see ``_kernels_py`` for the contract."""

import numpy as np
from libc.math cimport exp, log, sin, cos, sqrt, NAN, isnan
from libc.stdint cimport int64_t

cdef enum:
    CONST, VAR, NEG, ADD, SUB, MUL, DIV, POW, EXP, LOG, SIN, COS, SQRT


cdef inline double ipow(double x, int64_t n) noexcept nogil:
    cdef int64_t m = -n if n < 0 else n
    cdef double result = 1.0
    cdef double base = x
    while m:
        if m & 1:
            result = result * base
        m >>= 1
        if m:
            base = base * base
    if n < 0:
        if result == 0.0:
            return NAN
        return 1.0 / result
    return result


def run_program(const int64_t[::1] opcode, const int64_t[::1] dst,
                const int64_t[::1] src_a, const int64_t[::1] src_b,
                const int64_t[::1] iarg, const double[::1] fconst,
                const double[:, ::1] points, Py_ssize_t nregs):
    cdef Py_ssize_t npts = points.shape[0]
    cdef Py_ssize_t ninstr = opcode.shape[0]
    regs_arr = np.empty((nregs, npts), dtype=np.float64)
    cdef double[:, ::1] regs = regs_arr
    cdef Py_ssize_t k, p, d, ra, rb
    cdef int64_t op, n
    cdef double x, y, c
    with nogil:
        for k in range(ninstr):
            op = opcode[k]
            d = dst[k]
            ra = src_a[k]
            rb = src_b[k]
            if op == CONST:
                c = fconst[k]
                for p in range(npts):
                    regs[d, p] = c
            elif op == VAR:
                n = iarg[k]
                for p in range(npts):
                    regs[d, p] = points[p, n]
            elif op == NEG:
                for p in range(npts):
                    regs[d, p] = -regs[ra, p]
            elif op == ADD:
                for p in range(npts):
                    regs[d, p] = regs[ra, p] + regs[rb, p]
            elif op == SUB:
                for p in range(npts):
                    regs[d, p] = regs[ra, p] - regs[rb, p]
            elif op == MUL:
                for p in range(npts):
                    regs[d, p] = regs[ra, p] * regs[rb, p]
            elif op == DIV:
                for p in range(npts):
                    y = regs[rb, p]
                    regs[d, p] = NAN if y == 0.0 else regs[ra, p] / y
            elif op == POW:
                n = iarg[k]
                for p in range(npts):
                    regs[d, p] = ipow(regs[ra, p], n)
            elif op == EXP:
                for p in range(npts):
                    regs[d, p] = exp(regs[ra, p])
            elif op == LOG:
                for p in range(npts):
                    x = regs[ra, p]
                    regs[d, p] = log(x) if x > 0.0 else NAN
            elif op == SIN:
                for p in range(npts):
                    regs[d, p] = sin(regs[ra, p])
            elif op == COS:
                for p in range(npts):
                    regs[d, p] = cos(regs[ra, p])
            elif op == SQRT:
                for p in range(npts):
                    x = regs[ra, p]
                    regs[d, p] = sqrt(x) if x >= 0.0 else NAN
    return regs_arr
