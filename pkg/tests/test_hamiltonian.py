import numpy as np
import pytest

from pencilkit import expr as ex
from pencilkit.geometry import COVARIANT, MetricField
from pencilkit.hamiltonian import LOCAL, NONLOCAL, assemble_dn_operator, assemble_pencil_operators
from conftest import PLANE, POLAR, const_pair, curved_pair, p1_fman, polar_metric, sphere_metric
from oracles import fd_christoffel, polar


def test_constant_metric_has_no_b_term():
    g = MetricField(PLANE, [[2, 1], [1, 3]], COVARIANT)
    op = assemble_dn_operator(g)
    assert op.label == LOCAL and op.flat
    assert all(e.is_zero() for e in op.b.ravel())
    assert op.report.passed


def test_polar_coefficients():
    op = assemble_dn_operator(polar_metric())
    assert op.label == LOCAL and op.report.passed
    pts = POLAR.sample(10, 0)
    b = ex.evaluate_array(op.b.ravel(), pts, POLAR.coords).reshape(-1, 2, 2, 2)
    r = pts[:, 0]
    assert np.allclose(b[:, 0, 1, 1], -1 / r)
    assert np.allclose(b[:, 1, 0, 1], 1 / r)
    assert np.allclose(b[:, 1, 1, 0], -r ** -3)
    # b^{ij}_k = −g^{is}Γ^j_sk against finite differences
    for p, x in enumerate(pts):
        want = -np.einsum("is,jsk->ijk", np.linalg.inv(polar(x)), fd_christoffel(polar, x))
        assert np.allclose(b[p], want, atol=1e-7)


def test_sphere_needs_nonlocal_tail():
    op = assemble_dn_operator(sphere_metric())
    assert op.label == NONLOCAL and not op.flat
    assert op.curvature_norm == pytest.approx(1.0, rel=1e-6)
    assert op.report.sub("levi_civita").passed and op.report.sub("b_reconstructs_gamma").passed
    assert op.to_json()["label"] == NONLOCAL


def test_pencil_labels():
    assert assemble_pencil_operators(const_pair()).label == "local bi-Hamiltonian (DN type)"
    assert assemble_pencil_operators(curved_pair()).label == "nonlocal bi-Hamiltonian (compatibility verified)"
    from pencilkit.fmanifold import build_pencil_from_fman
    f = p1_fman()
    ops = assemble_pencil_operators(build_pencil_from_fman(f), f.sample())
    assert ops.label == "local bi-Hamiltonian (DN type)"
    assert ops.g.flat and ops.g_tilde.flat
