import numpy as np
import pytest

from pencilkit import expr as ex
from pencilkit.circalg import (check_invariance, check_right_symmetry, circ, circ_direct,
                               curvature_circ_residual)
from pencilkit.errors import PreconditionFailed
from pencilkit.geometry import OneForm
from pencilkit.pencil import check_compatible
from conftest import (PLANE, conformal_pair, const_pair, crossed_pair, curved_pair, general_pair, pair,
                      semisimple_pair)


def form(chart, comps):
    return OneForm(chart, np.array([chart.parse(str(c)) for c in comps], dtype=object))


def test_circ_vanishes_for_equal_and_constant_pairs():
    same = pair(PLANE, [["x1", 0], [0, "x2^2"]], [["x1", 0], [0, "x2^2"]])
    a, b = form(PLANE, ["x2", 1]), form(PLANE, [1, "x1"])
    pts = PLANE.sample(10, 0)
    for p in (same, const_pair()):
        assert np.abs(ex.evaluate_array(circ(p, a, b).components, pts, PLANE.coords)).max() <= 1e-12


def test_circ_matches_two_connection_evaluation():
    p = semisimple_pair()
    pts = PLANE.sample(20, 0)
    for a, b in [([1, 0], [0, 1]), (["x2", 1], ["x1^2", "sin(x2)"])]:
        fa, fb = form(PLANE, a), form(PLANE, b)
        got = ex.evaluate_array(circ(p, fa, fb).components, pts, PLANE.coords)
        ref = ex.evaluate_array(circ_direct(p, fa, fb).components, pts, PLANE.coords)
        assert np.abs(got - ref).max() <= 1e-12


def test_invariance():
    rep = check_invariance(crossed_pair())
    assert rep.sub("g_law").passed and rep.sub("g_tilde_law").verdict == "skipped"
    rep = check_invariance(general_pair())
    assert rep.sub("g_law").passed
    rep = check_invariance(semisimple_pair())
    assert rep.passed and rep.residual <= 1e-8
    same = pair(PLANE, [[1, 0], [0, 1]], [[1, 0], [0, 1]])
    assert check_invariance(same).passed


def test_right_symmetry_agrees_with_compatibility():
    assert check_right_symmetry(const_pair()).passed
    rep = check_right_symmetry(semisimple_pair())
    assert rep.passed and rep.residual <= 1e-8
    for p in (conformal_pair(), curved_pair()):
        assert check_right_symmetry(p).verdict == check_compatible(p).verdict
    with pytest.raises(PreconditionFailed):
        check_right_symmetry(crossed_pair())


def test_curvature_circ_identity_holds_for_arbitrary_pairs():
    for p in (const_pair(), semisimple_pair(), crossed_pair(), conformal_pair(), curved_pair(), general_pair()):
        rep = curvature_circ_residual(p)
        assert rep.passed, (p, rep.residual)
