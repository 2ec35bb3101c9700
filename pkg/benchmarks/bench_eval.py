"""Compare the compiled and numpy program evaluators on curvature-sized batches.

Usage: python benchmarks/bench_eval.py [--points N] [--repeat R]
"""

import argparse
import time

import numpy as np

from pencilkit import _kernels_py
from pencilkit.expr import Program
from pencilkit.geometry import COVARIANT, Chart, MetricField, riemann

try:
    from pencilkit import _ckernels
except ImportError:
    _ckernels = None


def workload():
    ch = Chart(("r", "th", "z"), ((1, 2), (0.5, 2.5), (0, 1)))
    g = MetricField(ch, [["1 + z^2", 0, "r*z"], [0, "r^2*sin(th)^2", 0], ["r*z", 0, "exp(z)"]], COVARIANT)
    R = riemann(g.connection).R
    return Program(list(R.ravel()), ch.coords), ch


def best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    prog, ch = workload()
    pts = np.ascontiguousarray(ch.sample(args.points, 0))
    code = prog._code
    print(f"program: {prog.size} instructions, {prog.nregs} registers, {len(pts)} points")
    t_py = best(lambda: _kernels_py.run_program(*code, pts, prog.nregs), args.repeat)
    print(f"numpy fallback : {t_py * 1e3:9.3f} ms")
    if _ckernels is None:
        print("compiled kernel: not built")
        return
    t_c = best(lambda: _ckernels.run_program(*code, pts, prog.nregs), args.repeat)
    a = _kernels_py.run_program(*code, pts, prog.nregs)[prog.out_regs]
    b = np.asarray(_ckernels.run_program(*code, pts, prog.nregs))[prog.out_regs]
    diff = np.nanmax(np.abs(a - b) / (1 + np.abs(a)))
    print(f"compiled kernel: {t_c * 1e3:9.3f} ms  (x{t_py / t_c:.1f}, max rel diff {diff:.1e})")


if __name__ == "__main__":
    main()
