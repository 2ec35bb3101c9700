"""Hydrodynamic Hamiltonian-operator data of a contravariant metric.

The operator g^{ij} d/dX − g^{is}Γ^j_sk u^k_X is Hamiltonian (non-degenerate
case) iff g is symmetric, Γ is its Levi-Civita connection and g is flat.
Only these finite conditions are checked; the Jacobi identity on loop space
is not re-verified.  A curved metric needs a nonlocal tail; its curvature
norm is reported so that the tail can be built downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import numeric as nu
from .errors import PreconditionFailed
from .geometry import MetricField, check_invertible
from .pencil import DEFAULT_POINTS, DEFAULT_SEED, PencilSpec, check_compatible, check_flat_pencil
from .report import DEFAULT_TOL, CheckReport, combine, judge, magnitude, pointwise_residual, timed

LOCAL = "local (Dubrovin-Novikov type)"
NONLOCAL = "nonlocal-required"
NOTE = "finite conditions only: the Jacobi identity on loop space is not re-verified"


@dataclass
class DNOperatorData:
    g: np.ndarray            # g^{ij}
    b: np.ndarray            # b^{ij}_k = −g^{is}Γ^j_sk, indexed [i, j, k]
    report: CheckReport
    flat: bool
    curvature_norm: float
    label: str
    coords: tuple = ()
    samples: list = field(default_factory=list)

    def to_json(self, timing: bool = False) -> dict:
        return {
            "label": self.label,
            "flat": self.flat,
            "curvature_norm": float(self.curvature_norm),
            "g": [[str(e) for e in row] for row in self.g],
            "b": [[[str(e) for e in row] for row in mat] for mat in self.b],
            "samples": self.samples,
            "report": self.report.to_json(timing),
        }


def operator_coefficients(g: MetricField) -> tuple[np.ndarray, np.ndarray]:
    """(g^{ij}, b^{ij}_k) as Expr arrays."""
    n = g.n
    con = g.contravariant.matrix
    gamma = g.connection.gamma
    b = ex.expr_array((n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                b[i, j, k] = -ex.total(con[i, s] * gamma[j, s, k] for s in range(n)
                                       if not (con[i, s].is_zero() or gamma[j, s, k].is_zero()))
    return con, b


def assemble_dn_operator(g: MetricField, points=None, tol: float = DEFAULT_TOL,
                         nsamples: int = 3) -> DNOperatorData:
    holder = {}
    with timed(holder):
        if points is None:
            points = g.chart.sample(DEFAULT_POINTS, DEFAULT_SEED, [g.det])
        points = np.atleast_2d(np.asarray(points, dtype=float))
        check_invertible(g, points)
        con, b = operator_coefficients(g)
        n = g.n
        gv = ex.evaluate_array(con.ravel(), points, g.chart.coords).reshape(-1, n, n)
        bv = ex.evaluate_array(b.ravel(), points, g.chart.coords).reshape(-1, n, n, n)
        # independent numeric path: jets of g and their Levi-Civita connection
        mj = nu.metric_jet(g, points)
        cj = nu.levi_civita(mj)
        subs = [judge("symmetric", pointwise_residual(gv, gv.transpose(0, 2, 1)), points, tol)]
        # Levi-Civita consistency: metricity b^{ij}_k + b^{ji}_k = ∂_k g^{ij},
        # torsion-freeness g^{is} b^{jk}_s = g^{js} b^{ik}_s
        dG = np.einsum("pkij->pijk", mj.dG)
        metricity = pointwise_residual(bv + bv.transpose(0, 2, 1, 3), dG)
        gb = np.einsum("pis,pjks->pijk", gv, bv)
        torsion = pointwise_residual(gb, gb.transpose(0, 2, 1, 3))
        subs.append(judge("levi_civita", np.maximum(metricity, torsion), points, tol))
        # −g_is b^{sj}_k = Γ^j_ik
        rec = -np.einsum("pis,psjk->pjik", mj.H, bv)
        subs.append(judge("b_reconstructs_gamma", pointwise_residual(rec, cj.gamma), points, tol))
        R, sc = nu.curvature(cj)
        curv = magnitude(R) / (1.0 + sc)
        subs.append(judge("flat", curv, points, tol))
        norm = float(magnitude(R).max())
        flat = subs[-1].passed
        label = LOCAL if flat else NONLOCAL
        notes = [NOTE, f"operator type: {label}"]
        if not flat:
            notes.append(f"curvature obstruction max |R| = {norm:.6g}; a Ferapontov-type nonlocal tail is needed")
        samples = [{"point": points[i].tolist(), "g": gv[i].tolist(), "b": bv[i].tolist()}
                   for i in range(min(nsamples, len(points)))]
    rep = combine("dn_operator", subs, notes=notes, data={"curvature_norm": norm})
    rep.millis = holder["millis"]
    return DNOperatorData(con, b, rep, flat, norm, label, g.chart.coords, samples)


@dataclass
class PencilOperators:
    g: DNOperatorData
    g_tilde: DNOperatorData
    flat_pencil: CheckReport
    compatible: CheckReport | None
    label: str

    def to_json(self, timing: bool = False) -> dict:
        return {
            "label": self.label,
            "g": self.g.to_json(timing),
            "g_tilde": self.g_tilde.to_json(timing),
            "flat_pencil": self.flat_pencil.to_json(timing),
            "compatible": None if self.compatible is None else self.compatible.to_json(timing),
        }


def assemble_pencil_operators(p: PencilSpec, points=None, tol: float = DEFAULT_TOL) -> PencilOperators:
    """Operator data for both metrics and the bi-Hamiltonian label of the pair."""
    if points is None:
        points = p.sample()
    flat = check_flat_pencil(p, points, tol)
    op_g = assemble_dn_operator(p.g, points, tol)
    op_gt = assemble_dn_operator(p.g_tilde, points, tol)
    compat = None
    if flat.passed:
        label = "local bi-Hamiltonian (DN type)"
    else:
        try:
            compat = check_compatible(p, points, tol)
            status = "verified" if compat.passed else "failed"
        except PreconditionFailed as exc:
            compat = exc.report
            status = "failed"
        label = f"nonlocal bi-Hamiltonian (compatibility {status})"
    return PencilOperators(op_g, op_gt, flat, compat, label)
