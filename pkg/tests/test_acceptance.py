"""The ten acceptance criteria; a one-line verdict per criterion is printed in the terminal summary."""

import json

import numpy as np
import pytest

from pencilkit import expr as ex
from pencilkit.circalg import check_right_symmetry
from pencilkit.cli import main
from pencilkit.fmanifold import (build_fman_from_pencil, build_pencil_from_fman, check_curvature_relation,
                                 check_f_condition, check_weak_qh, compare_fman, qh_pencil_from_fman)
from pencilkit.hamiltonian import NONLOCAL, assemble_dn_operator
from pencilkit.pencil import (check_almost_compatible, check_compatible, check_flat_pencil, check_semisimple)
from pencilkit.problem import corpus_files, load_problem
from pencilkit.submanifold import (EmbeddingSpec, check_distinguished, check_fman_submanifold,
                                   check_induced_compatibility, identity_embedding)
from pencilkit.errors import ClosureFailed
from pencilkit.geometry import Chart, COVARIANT, MetricField
from conftest import (PLANE, POLAR, SPACE, SPHERE, const_pair, crossed_pair, general_pair, p1_fman, pair,
                      polar_metric, semisimple_fman3, sphere_metric)
from oracles import fd_christoffel, fd_riemann, polar, sphere

TOL = 1e-8


def corpus_pairs():
    out = []
    for path in corpus_files():
        prob = load_problem(path)
        if prob.pair is not None:
            out.append((prob.name, prob.pair, prob.pair.sample(prob.sampling.points, prob.sampling.seed)))
    for name, p in (("general", general_pair()), ("crossed-test", crossed_pair())):
        out.append((name, p, p.sample()))
    return out


@pytest.mark.criterion(1, "symbolic Christoffel/curvature match finite differences on polar and sphere")
def test_criterion_1_derivative_oracle():
    for metric, fd, chart in ((polar_metric(), polar, POLAR), (sphere_metric(), sphere, SPHERE)):
        pts = chart.sample(20, 11)
        gam = ex.evaluate_array(metric.connection.gamma.ravel(), pts, chart.coords).reshape(-1, 2, 2, 2)
        R = ex.evaluate_array(metric.curvature.R.ravel(), pts, chart.coords).reshape(-1, 2, 2, 2, 2)
        for i, x in enumerate(pts):
            want_g, want_R = fd_christoffel(fd, x), fd_riemann(fd, x)
            assert np.abs(gam[i] - want_g).max() <= 1e-6 * (1 + np.abs(want_g).max())
            assert np.abs(R[i] - want_R).max() <= 1e-6 * (1 + np.abs(want_R).max())


@pytest.mark.criterion(2, "lambda-sampled almost-compatibility agrees with N_A on >= 6 pairs (>= 2 failing)")
def test_criterion_2_nijenhuis_equivalence():
    pairs = corpus_pairs()
    assert len(pairs) >= 6
    failing = 0
    for name, p, pts in pairs:
        rep = check_almost_compatible(p, pts, TOL)
        assert rep.sub("pencil_connection").verdict == rep.sub("nijenhuis").verdict, name
        assert not rep.inconsistent, name
        failing += rep.verdict == "fail"
    assert failing >= 2


@pytest.mark.criterion(3, "curvature-pencil, contorsion conditions and right symmetry agree")
def test_criterion_3_compatibility_equivalence():
    checked = 0
    for name, p, pts in corpus_pairs():
        if not check_almost_compatible(p, pts, TOL).passed:
            continue
        rep = check_compatible(p, pts, TOL)
        verdicts = {s.verdict for s in rep.sub_verdicts}
        assert len(verdicts) == 1 and not rep.inconsistent, name
        assert check_right_symmetry(p, pts, TOL).verdict == rep.verdict, name
        checked += 1
    assert checked >= 4


@pytest.mark.criterion(4, "diag(1,1) / diag(x1,x2) is semisimple, almost compatible and compatible")
def test_criterion_4_semisimple_pair():
    p = pair(PLANE, [[1, 0], [0, 1]], [["x1", 0], [0, "x2"]])
    pts = p.sample()
    for rep in (check_semisimple(p, pts, TOL), check_almost_compatible(p, pts, TOL), check_compatible(p, pts, TOL)):
        assert rep.passed
        assert rep.residual is None or rep.residual <= 1e-8


@pytest.mark.criterion(5, "P1 round trip: pencil compatible + flat + weak-qh, F-manifold recovered")
def test_criterion_5_p1_round_trip():
    f = p1_fman()
    pts = f.sample()
    q = qh_pencil_from_fman(f, pts)
    assert check_compatible(q.pencil, pts, TOL).passed
    assert check_flat_pencil(q.pencil, pts, TOL).passed
    assert (q.d, q.D) == pytest.approx((1 + f.k - f.D, f.D))
    assert check_weak_qh(q, pts, TOL).passed
    back = build_fman_from_pencil(q, pts, TOL)
    rep = compare_fman(f, back, pts, TOL)
    assert rep.sub("structure_functions").passed and rep.sub("unity").passed


@pytest.mark.criterion(6, "P1 flat with total symmetry; perturbed c breaks one, reduced identity consistent")
def test_criterion_6_frobenius_criterion():
    f = p1_fman()
    pts = f.sample()
    R, _ = build_pencil_from_fman(f, pts).numerics(pts).curvature("g")
    assert np.abs(R).max() <= 1e-8
    assert check_f_condition(f, pts, TOL).passed
    assert check_curvature_relation(f, pts, TOL).sub("reduced_identity").passed
    g = f.perturbed(0.1, (0, 1, 1))
    R, _ = build_pencil_from_fman(g, pts).numerics(pts).curvature("g")
    flat = np.abs(R).max() <= 1e-8
    sym = check_f_condition(g, pts, TOL).passed
    assert not (flat and sym)
    reduced = check_curvature_relation(g, pts, TOL).sub("reduced_identity")
    assert reduced.passed == (flat and sym)


def _distinguished_embeddings():
    diag = pair(SPACE, np.eye(3).tolist(), [["x1", 0, 0], [0, "x2", 0], [0, 0, "x3"]])
    params = Chart(("u1", "u2"), ((1.0, 2.0), (2.5, 3.5)))
    plane = EmbeddingSpec(SPACE, params, ("u1", "u2", "4.5"))
    f = semisimple_fman3()
    built = build_pencil_from_fman(f, f.sample())
    fplane = EmbeddingSpec(SPACE, Chart(("u1", "u3"), ((1.0, 2.0), (4.0, 5.0))), ("u1", "3", "u3"))
    return [("identity", diag, identity_embedding(SPACE)), ("plane", diag, plane),
            ("F-submanifold", built, fplane)]


@pytest.mark.criterion(7, "second-fundamental-form criterion equals direct induced compatibility")
def test_criterion_7_submanifold_oracle():
    cases = _distinguished_embeddings()
    assert len(cases) >= 3
    for name, p, emb in cases:
        assert check_distinguished(p, emb).passed, name
        rep = check_induced_compatibility(p, emb)
        assert rep.sub("second_fundamental_form").verdict == rep.sub("induced_pair").verdict, name
        assert not rep.inconsistent, name


@pytest.mark.criterion(8, "F-submanifold closure + induced compatibility; E-defect caught with witness")
def test_criterion_8_fman_submanifold():
    prob = load_problem(next(p for p in corpus_files() if p.stem == "semisimple-fman-3d"))
    for emb in prob.embeddings:
        rep = check_fman_submanifold(prob.fman, emb.spec)
        assert rep.passed and rep.sub("induced_compatibility").passed, emb.name
    prob = load_problem(next(p for p in corpus_files() if p.stem == "euler-defect"))
    with pytest.raises(ClosureFailed) as info:
        check_fman_submanifold(prob.fman, prob.embeddings[0].spec)
    assert info.value.hypothesis == "euler_closure" and info.value.witness is not None


@pytest.mark.criterion(9, "constant metric gives b = 0 and a local operator; sphere is nonlocal-required")
def test_criterion_9_dn_operator():
    op = assemble_dn_operator(MetricField(PLANE, [[2, 1], [1, 3]], COVARIANT))
    assert all(e.is_zero() for e in op.b.ravel())
    assert op.report.passed and all(s.passed for s in op.report.sub_verdicts)
    op = assemble_dn_operator(sphere_metric())
    assert op.label == NONLOCAL and op.curvature_norm > 0


@pytest.mark.criterion(10, "two full corpus runs with seed 42 give byte-identical JSON")
def test_criterion_10_determinism(tmp_path, capsys):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.json"
        main(["corpus", "--run", "--seed", "42", "--json", str(path)])
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert all(r["sampling"]["seed"] == 42 for r in json.loads(outs[0]))
