"""Pure numpy evaluator for compiled expression programs.

Mirrors ``_ckernels.pyx`` instruction for instruction: NaN marks division by
zero, log of a non-positive value and sqrt of a negative value, and integer
powers use the same square-and-multiply sequence so results agree with the
compiled kernel except for the last ulp of transcendental functions.
"""

import numpy as np

CONST, VAR, NEG, ADD, SUB, MUL, DIV, POW, EXP, LOG, SIN, COS, SQRT = range(13)


def _ipow(x, n):
    m = -n if n < 0 else n
    result = np.ones_like(x)
    base = x.copy()
    while m:
        if m & 1:
            result = result * base
        m >>= 1
        if m:
            base = base * base
    if n < 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            result = np.where(result == 0.0, np.nan, 1.0 / np.where(result == 0.0, 1.0, result))
    return result


def run_program(opcode, dst, src_a, src_b, iarg, fconst, points, nregs):
    npts = points.shape[0]
    regs = np.empty((nregs, npts))
    with np.errstate(all="ignore"):
        for k in range(opcode.shape[0]):
            op = opcode[k]
            a = regs[src_a[k]]
            if op == CONST:
                out = np.full(npts, fconst[k])
            elif op == VAR:
                out = points[:, iarg[k]].copy()
            elif op == NEG:
                out = -a
            elif op == ADD:
                out = a + regs[src_b[k]]
            elif op == SUB:
                out = a - regs[src_b[k]]
            elif op == MUL:
                out = a * regs[src_b[k]]
            elif op == DIV:
                b = regs[src_b[k]]
                out = np.where(b == 0.0, np.nan, a / np.where(b == 0.0, 1.0, b))
            elif op == POW:
                out = _ipow(a, int(iarg[k]))
            elif op == EXP:
                out = np.exp(a)
            elif op == LOG:
                out = np.where(a > 0.0, np.log(np.where(a > 0.0, a, 1.0)), np.nan)
                out = np.where(np.isnan(a), np.nan, out)
            elif op == SIN:
                out = np.sin(a)
            elif op == COS:
                out = np.cos(a)
            elif op == SQRT:
                out = np.where(a >= 0.0, np.sqrt(np.where(a >= 0.0, a, 0.0)), np.nan)
                out = np.where(np.isnan(a), np.nan, out)
            else:
                raise ValueError(f"bad opcode {op}")
            regs[dst[k]] = out
    return regs
