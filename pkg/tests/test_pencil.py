import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pencilkit import expr as ex
from pencilkit.errors import PreconditionFailed
from pencilkit.geometry import COVARIANT, Chart, MetricField, VectorField, lie_bracket
from pencilkit.pencil import (check_almost_compatible, check_compatible, check_flat_pencil, check_prop_au,
                              check_semisimple, contorsion, nijenhuis, operator_A, pencil_metric)
from conftest import (PLANE, POLAR, conformal_pair, const_pair, crossed_pair, general_pair, pair, polar_metric,
                      semisimple_pair, sphere_metric, p1_fman)


def vals(arr, chart, pts):
    return ex.evaluate_array(arr, pts, chart.coords)


def bracket_nijenhuis(A, chart):
    """N_A(∂i, ∂j) = −[A∂i, A∂j] + A[A∂i, ∂j] + A[∂i, A∂j] − A²[∂i, ∂j], via Lie brackets."""
    n = chart.n
    basis = [VectorField(chart, np.array([ex.const(float(k == i)) for k in range(n)], dtype=object))
             for i in range(n)]
    col = [VectorField(chart, A[:, i].copy()) for i in range(n)]

    def apply(v):
        return np.array([ex.total(A[k, s] * v[s] for s in range(n)) for k in range(n)], dtype=object)

    N = ex.expr_array((n, n, n))
    for i in range(n):
        for j in range(n):
            val = (-lie_bracket(col[i], col[j]).components + apply(lie_bracket(col[i], basis[j]).components)
                   + apply(lie_bracket(basis[i], col[j]).components))
            for k in range(n):
                N[k, i, j] = val[k]
    return N


def test_operator_A():
    pts = PLANE.sample(20, 0)
    assert np.allclose(vals(operator_A(pair(PLANE, [[1, 0], [0, 1]], [[1, 0], [0, 1]])), PLANE, pts), np.eye(2))
    A = vals(operator_A(semisimple_pair()), PLANE, pts)
    assert np.allclose(A[:, 0, 0], pts[:, 0]) and np.allclose(A[:, 1, 1], pts[:, 1])
    conf = pair(PLANE, [[1, 0], [0, 1]], [["exp(x1)", 0], [0, "exp(x1)"]])
    A = vals(operator_A(conf), PLANE, pts)
    assert np.allclose(A, np.exp(pts[:, 0])[:, None, None] * np.eye(2))


@pytest.mark.parametrize("A,zero", [
    ([[1, 0], [0, 1]], True),
    ([["exp(x1*x2)", 0], [0, "exp(x1*x2)"]], True),
    ([["x2", 0], [0, "x1"]], False),
    ([["x1", "x2^2"], ["x1*x2", "sin(x1)"]], False),
])
def test_nijenhuis_matches_bracket_definition(A, zero):
    A = np.array([[PLANE.parse(str(v)) for v in row] for row in A], dtype=object)
    pts = PLANE.sample(30, 0)
    N = vals(nijenhuis(A, PLANE), PLANE, pts)
    ref = vals(bracket_nijenhuis(A, PLANE), PLANE, pts)
    assert np.abs(N - ref).max() <= 1e-9
    assert (np.abs(N).max() <= 1e-9) == zero


def test_pencil_metric_is_affine():
    p = semisimple_pair()
    pts = PLANE.sample(5, 0)
    g3 = vals(pencil_metric(p, 3.0).matrix, PLANE, pts)
    assert np.allclose(g3, vals(p.g_star.matrix, PLANE, pts) + 3 * vals(p.g_tilde_star.matrix, PLANE, pts))


def test_almost_compatible_examples():
    rep = check_almost_compatible(const_pair())
    assert rep.passed and rep.residual <= 1e-12 and len(rep.sub_verdicts) == 2
    assert check_almost_compatible(semisimple_pair()).passed
    rep = check_almost_compatible(crossed_pair())
    assert rep.verdict == "fail" and rep.witnesses and not rep.inconsistent
    assert {s.verdict for s in rep.sub_verdicts} == {"fail"}


def test_contorsion():
    p = pair(PLANE, [["x1", 0], [0, 1]], [["x1", 0], [0, 1]])
    assert np.allclose(vals(contorsion(p).K, PLANE, PLANE.sample(5, 0)), 0)
    assert all(e.is_zero() for e in contorsion(const_pair()).K.ravel())
    # polar metric against twice the Euclidean metric in the same chart
    cart = MetricField(POLAR, [[2, 0], [0, 2]], COVARIANT)
    from pencilkit.pencil import PencilSpec
    K = vals(contorsion(PencilSpec(POLAR, polar_metric(), cart)).K, POLAR, POLAR.sample(10, 0))
    ref = vals(polar_metric().connection.gamma, POLAR, POLAR.sample(10, 0))
    assert np.allclose(K, ref)


def test_compatible_examples():
    rep = check_compatible(const_pair())
    assert rep.passed and check_flat_pencil(const_pair()).passed
    rep = check_compatible(semisimple_pair())
    assert rep.passed and len(rep.sub_verdicts) == 3 and all(s.residual <= 1e-8 for s in rep.sub_verdicts)
    rep = check_compatible(conformal_pair())
    assert not rep.inconsistent
    assert len({s.verdict for s in rep.sub_verdicts}) == 1


def test_compatible_refuses_non_almost_compatible_pairs():
    with pytest.raises(PreconditionFailed) as info:
        check_compatible(crossed_pair())
    assert info.value.report.verdict == "precondition-failed"


def test_prop_au():
    p = pair(PLANE, [["x1", 0], [0, "x2"]], [["x1", 0], [0, "x2"]])
    assert check_prop_au(p).passed
    rep = check_prop_au(semisimple_pair())
    assert rep.passed and rep.residual <= 1e-8
    with pytest.raises(PreconditionFailed):
        check_prop_au(crossed_pair())


def test_flat_pencil():
    assert check_flat_pencil(const_pair()).passed
    from pencilkit.pencil import PencilSpec
    from conftest import SPHERE
    eucl = MetricField(SPHERE, [[1, 0], [0, 1]], COVARIANT)
    rep = check_flat_pencil(PencilSpec(SPHERE, sphere_metric(), eucl))
    assert rep.verdict == "fail" and rep.witnesses
    from pencilkit.fmanifold import build_pencil_from_fman
    f = p1_fman()
    rep = check_flat_pencil(build_pencil_from_fman(f), f.sample())
    assert rep.passed and rep.residual <= 1e-8


def test_semisimple():
    same = pair(PLANE, [[1, 0], [0, 1]], [[1, 0], [0, 1]])
    assert check_semisimple(same).verdict == "fail"
    ch = Chart(("x1", "x2"), ((1, 2), (3, 4)))
    rep = check_semisimple(pair(ch, [[1, 0], [0, 1]], [["x1", 0], [0, "x2"]]))
    assert rep.passed and rep.data["min_gap"] >= 1 - 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 2), st.floats(-0.4, 0.4), st.floats(0.5, 2))
def test_semisimple_gap_matches_characteristic_polynomial(a, b, c):
    ch = Chart(("x1", "x2"), ((0.5, 1.5), (0.5, 1.5)))
    p = pair(ch, [[1, 0], [0, 1]], [[f"{a}+x1", f"{b}*x2"], [f"{b}*x2", f"{c}*x2"]])
    pts = ch.sample(30, 0)
    rep = check_semisimple(p, pts)
    A = vals(operator_A(p), ch, pts)
    tr, det = np.trace(A, axis1=1, axis2=2), np.linalg.det(A)
    disc = tr ** 2 - 4 * det
    gap = np.sqrt(np.maximum(disc, 0)).min()
    assert rep.data["min_gap"] == pytest.approx(gap, rel=1e-6, abs=1e-9)


def test_almost_compatible_criteria_agree_on_random_pairs():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a, b, c = rng.uniform(0.5, 2, 3)
        ch = Chart(("x1", "x2"), ((0.5, 1.5), (0.5, 1.5)))
        p = pair(ch, [[1, 0], [0, 1]], [[f"{a}+x1^2", f"{b}*x1*x2"], [f"{b}*x1*x2", f"{c}+x2"]])
        assert not check_almost_compatible(p).inconsistent
    assert not check_almost_compatible(general_pair()).inconsistent
