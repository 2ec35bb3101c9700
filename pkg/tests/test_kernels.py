import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pencilkit import _kernels_py
from pencilkit.expr import Program, parse

ckernels = pytest.importorskip("pencilkit._ckernels")
NAMES = ("x1", "x2")
LEAVES = st.sampled_from(["x1", "x2", "1.5", "0", "2"])


def _node(children):
    unary = st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "-"]), children).map(
        lambda t: f"{t[0]}({t[1]})")
    binary = st.tuples(children, st.sampled_from(["+", "-", "*", "/"]), children).map(
        lambda t: f"({t[0]} {t[1]} {t[2]})")
    power = st.tuples(children, st.integers(-3, 4)).map(lambda t: f"({t[0]})^{t[1]}")
    return unary | binary | power


EXPRS = st.lists(st.recursive(LEAVES, _node, max_leaves=10), min_size=1, max_size=4)


def both(prog, pts):
    code = prog._code
    a = _kernels_py.run_program(*code, pts, prog.nregs)[prog.out_regs]
    b = np.asarray(ckernels.run_program(*code, pts, prog.nregs))[prog.out_regs]
    return a, b


@settings(max_examples=80, deadline=None)
@given(EXPRS, st.integers(0, 2 ** 16))
def test_compiled_and_numpy_kernels_agree(texts, seed):
    prog = Program([parse(t, NAMES) for t in texts], NAMES)
    pts = np.random.default_rng(seed).uniform(-2, 2, (17, 2))
    a, b = both(prog, pts)
    # NaN marks the same domain failures in both
    assert np.array_equal(np.isnan(a), np.isnan(b))
    ok = np.isfinite(a) & np.isfinite(b)
    assert np.allclose(a[ok], b[ok], rtol=1e-13, atol=1e-300)
    assert np.array_equal(np.isinf(a), np.isinf(b))


def test_domain_failures_are_nan():
    prog = Program([parse("1/x1", NAMES), parse("log(x2)", NAMES), parse("sqrt(x1)", NAMES)], NAMES)
    a, b = both(prog, np.array([[0.0, -1.0], [-1.0, 0.0]]))
    # a[root, point]
    for out in (a, b):
        assert np.isnan(out[0, 0]) and np.isnan(out[1, 0]) and np.isnan(out[1, 1]) and np.isnan(out[2, 1])
        assert out[0, 1] == -1.0 and out[2, 0] == 0.0
