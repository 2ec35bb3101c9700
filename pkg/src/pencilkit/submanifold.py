"""Induced metric pairs on embedded submanifolds.

An embedding is given by components x^i(u) over a parameter chart; all
ambient quantities are evaluated at the image points.  The zero-extension
ᾱ of a 1-form α on N (vanishing on the g̃-orthogonal complement TN^⊥) is
ᾱ = α h̃⁻¹ Jᵀ g̃, and the g̃-orthogonal projector onto TN is
P_T = J h̃⁻¹ Jᵀ g̃; P_N = I − P_T projects onto TN^⊥.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .circalg import structure
from .errors import ClosureFailed, NotDistinguished, PreconditionFailed, RankDeficient, SingularInducedMetric
from .geometry import COVARIANT, DEGENERACY_EPS, Chart, MetricField, determinant
from .pencil import DEFAULT_POINTS, DEFAULT_SEED, PencilSpec, check_compatible
from .report import (DEFAULT_TOL, FAIL, PRECONDITION_FAILED, CheckReport, SubVerdict, combine, judge, pointwise_residual,
                     precondition_failed, timed)

RANK_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class EmbeddingSpec:
    """x^i(u) from a parameter chart (dim m) into the ambient chart (dim n ≥ m)."""

    ambient: Chart
    params: Chart
    components: tuple

    def __post_init__(self):
        comps = tuple(c if isinstance(c, ex.Expr) else (
            ex.const(c) if isinstance(c, (int, float)) else self.params.parse(c)) for c in self.components)
        if len(comps) != self.ambient.n:
            raise ValueError(f"embedding has {len(comps)} components for a {self.ambient.n}-dimensional chart")
        if self.params.n > self.ambient.n:
            raise ValueError("parameter chart is larger than the ambient chart")
        object.__setattr__(self, "components", comps)

    @property
    def jacobian(self) -> np.ndarray:
        """J[i, a] = ∂x^i/∂u^a."""
        n, m = self.ambient.n, self.params.n
        J = ex.expr_array((n, m))
        for i in range(n):
            for a in range(m):
                J[i, a] = ex.differentiate(self.components[i], self.params.coords[a])
        return J

    def pull(self, e: ex.Expr) -> ex.Expr:
        """Ambient expression composed with the embedding."""
        return ex.substitute(e, dict(zip(self.ambient.coords, self.components)))

    def image(self, u) -> np.ndarray:
        return ex.evaluate_array(list(self.components), np.atleast_2d(u), self.params.coords)

    def jacobian_values(self, u) -> np.ndarray:
        n, m = self.ambient.n, self.params.n
        vals = ex.evaluate_array(self.jacobian.ravel(), np.atleast_2d(u), self.params.coords)
        return vals.reshape(len(vals), n, m)

    def sample(self, npoints=DEFAULT_POINTS, seed=DEFAULT_SEED) -> np.ndarray:
        return self.params.sample(npoints, seed)


def identity_embedding(chart: Chart) -> EmbeddingSpec:
    return EmbeddingSpec(chart, chart, tuple(chart.var(i) for i in range(chart.n)))


def _check_rank(emb, u):
    J = emb.jacobian_values(u)
    s = np.linalg.svd(J, compute_uv=False)
    smin = s[:, -1]
    if (smin <= RANK_EPS).any():
        i = int(np.argmin(smin))
        raise RankDeficient(f"Jacobian loses rank at u = {u[i].tolist()}")
    return J


def pullback_metric(g_amb: MetricField, emb: EmbeddingSpec, points=None) -> MetricField:
    """h_ab = g_ij(x(u)) J^i_a J^j_b, checked for rank and non-degeneracy at samples."""
    if points is None:
        points = emb.params.sample(DEFAULT_POINTS, DEFAULT_SEED)
    _check_rank(emb, points)
    cov = g_amb.covariant.matrix
    J = emb.jacobian
    n, m = emb.ambient.n, emb.params.n
    pulled = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            pulled[i, j] = emb.pull(cov[i, j])
    h = ex.expr_array((m, m))
    for a in range(m):
        for b in range(a, m):
            h[a, b] = ex.total(pulled[i, j] * J[i, a] * J[j, b] for i in range(n) for j in range(n)
                               if not (pulled[i, j].is_zero() or J[i, a].is_zero() or J[j, b].is_zero()))
            h[b, a] = h[a, b]
    dets = ex.evaluate_array([determinant(h)], points, emb.params.coords, strict=False)[:, 0]
    bad = ~np.isfinite(dets) | (np.abs(dets) <= DEGENERACY_EPS)
    if bad.any():
        i = int(np.argmax(bad))
        raise SingularInducedMetric(witness=points[i].tolist(), message="induced metric is degenerate")
    return MetricField(emb.params, h, COVARIANT)


def induced_pencil(p: PencilSpec, emb: EmbeddingSpec, points=None) -> PencilSpec:
    return PencilSpec(emb.params, pullback_metric(p.g, emb, points), pullback_metric(p.g_tilde, emb, points),
                      p.lambdas)


class _Frame:
    """Pointwise embedding data: image points, J, ambient pencil numerics, projectors."""

    def __init__(self, p: PencilSpec, emb: EmbeddingSpec, u):
        self.u = u
        self.x = emb.image(u)
        self.J = _check_rank(emb, u)
        self.num = p.numerics(self.x)
        H, Ht = self.num.mj.H, self.num.mjt.H
        self.h = np.einsum("pia,pij,pjb->pab", self.J, H, self.J)
        self.ht = np.einsum("pia,pij,pjb->pab", self.J, Ht, self.J)
        for name, m in (("h", self.h), ("h~", self.ht)):
            det = np.abs(np.linalg.det(m))
            if (det <= DEGENERACY_EPS).any():
                i = int(np.argmin(det))
                raise SingularInducedMetric(witness=u[i].tolist(), message=f"induced metric {name} is degenerate")
        self.ht_inv = np.linalg.inv(self.ht)
        # ext[b, k]: zero-extension of du^b
        self.ext = np.einsum("pbc,pjc,pjk->pbk", self.ht_inv, self.J, Ht)
        self.PT = np.einsum("pia,pab,pjb,pjk->pik", self.J, self.ht_inv, self.J, Ht)
        n = self.J.shape[1]
        self.PN = np.eye(n)[None] - self.PT


def _span_residual(J, V):
    """Per-point residual of the columns of V being in span(J), least squares."""
    pinv = np.linalg.pinv(J)
    proj = np.einsum("pia,paj->pij", J, np.einsum("pai,pij->paj", pinv, V))
    return pointwise_residual(V, proj)


def check_distinguished(p: PencilSpec, emb: EmbeddingSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """A(TN) ⊂ TN, with the tangential part of A checked against B = h̃*h."""
    holder = {}
    with timed(holder):
        u = emb.sample() if points is None else np.atleast_2d(np.asarray(points, dtype=float))
        fr = _Frame(p, emb, u)
        A, _ = fr.num.A
        AJ = np.einsum("pij,pja->pia", A, fr.J)
        sub = judge("a_preserves_tn", _span_residual(fr.J, AJ), u, tol)
        B = np.einsum("pab,pbc->pac", fr.ht_inv, fr.h)
        lhs = np.einsum("pij,pja->pia", fr.PT, AJ)
        rhs = np.einsum("pib,pba->pia", fr.J, B)
        tangential = judge("tangential_part_is_b", pointwise_residual(lhs, rhs), u, tol)
    rep = combine("distinguished", [sub, tangential], primary="a_preserves_tn")
    rep.millis = holder["millis"]
    return rep


def _require_distinguished(p, emb, u, tol):
    rep = check_distinguished(p, emb, u, tol)
    if not rep.passed:
        w = rep.witnesses[0]["point"] if rep.witnesses else None
        raise NotDistinguished(w, rep.residual)
    return rep


def _require_ambient_compatible(p, x, tol):
    # the second-fundamental-form criterion presumes a compatible ambient pair
    try:
        amb = check_compatible(p, x, tol)
    except PreconditionFailed as exc:
        raise PreconditionFailed(f"induced_compatibility: ambient {exc}", exc.report) from None
    if not amb.passed:
        raise PreconditionFailed("induced_compatibility: ambient pair is not compatible",
                                 precondition_failed("induced_compatibility", "ambient pair is not compatible", amb))


def second_ff_difference(p: PencilSpec, emb: EmbeddingSpec, points=None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """S_Xα − S̃_Xα for X = ∂_{u^a}, α = du^b: array [p, a, b, k] of covectors in (TN)⁰."""
    u = emb.sample() if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    _require_distinguished(p, emb, u, tol)
    fr = _Frame(p, emb, u)
    return _sff(fr)


def _sff(fr):
    # (∇_X ᾱ − ∇̃_X ᾱ)_j = −X^i K^k_ij ᾱ_k, then the (TN)⁰ component β ↦ β P_N
    diff = -np.einsum("pia,pkij,pbk->pabj", fr.J, fr.num.K, fr.ext)
    return np.einsum("pabj,pjk->pabk", diff, fr.PN)


def check_induced_compatibility(p: PencilSpec, emb: EmbeddingSpec, points=None,
                                tol: float = DEFAULT_TOL) -> CheckReport:
    """Compatibility of the induced pair: the second-fundamental-form criterion
    against a direct check of (h, h̃); also the restricted ∘ identity and the
    restriction of the pencil."""
    holder = {}
    with timed(holder):
        u = emb.sample() if points is None else np.atleast_2d(np.asarray(points, dtype=float))
        _require_distinguished(p, emb, u, tol)
        fr = _Frame(p, emb, u)
        _require_ambient_compatible(p, fr.x, tol)
        S = -_sff(fr)    # S̃ − S
        Gt = fr.num.mjt.G
        lhs = np.einsum("pabk,pkl,pcdl->pabcd", S, Gt, S)     # g̃*(S_a α_b, S_c α_d)
        # X ↔ Y with α, β fixed: (a, b, c, d) -> (c, b, a, d)
        rhs = np.einsum("pcbk,pkl,padl->pabcd", S, Gt, S)
        sub_sff = judge("second_fundamental_form", pointwise_residual(lhs, rhs), u, tol)
        q = induced_pencil(p, emb, u)
        notes = []
        try:
            direct = check_compatible(q, u, tol)
            sub_direct = SubVerdict("induced_pair", direct.verdict, direct.residual,
                                    direct.witnesses[:1] or None)
        except PreconditionFailed as exc:
            sub_direct = SubVerdict("induced_pair", FAIL, None, None)
            notes.append(f"induced pair: {exc}")
        qn = q.numerics(u)
        CN = structure(qn.mj.G, qn.K)
        C = structure(fr.num.mj.G, fr.num.K)
        amb = np.einsum("pak,pbl,pklj,pjc->pabc", fr.ext, fr.ext, C, fr.J)
        sub_circ = judge("restricted_circ", pointwise_residual(CN, amb), u, tol)
        lam_subs = []
        for lam in p.lambdas:
            Gl = fr.num.mj.G + lam * Gt
            Hl = np.linalg.inv(Gl)
            hl = np.einsum("pia,pij,pjb->pab", fr.J, Hl, fr.J)
            target = np.linalg.inv(np.linalg.inv(fr.h) + lam * fr.ht_inv)
            lam_subs.append(pointwise_residual(hl, target))
        sub_lam = judge("pencil_restriction", np.max(lam_subs, axis=0), u, tol)
        HP = np.einsum("pij,pjk->pik", fr.num.mjt.H, fr.PT)
        proj = np.maximum(pointwise_residual(np.einsum("pij,pjk->pik", fr.PT, fr.PT), fr.PT),
                          pointwise_residual(HP, HP.transpose(0, 2, 1)))
        sub_proj = judge("projector", proj, u, tol)
    subs = [sub_sff, sub_direct, sub_circ, sub_lam, sub_proj]
    rep = combine("induced_compatibility", subs, primary="induced_pair", notes=notes)
    decided = {s.verdict for s in (sub_sff, sub_direct)}
    rep.inconsistent = len(decided) > 1 or not (sub_circ.passed and sub_lam.passed and sub_proj.passed)
    if rep.inconsistent:
        rep.notes.append("equivalent criteria disagree: " +
                         ", ".join(f"{s.name}={s.verdict}" for s in subs))
    rep.millis = holder["millis"]
    return rep


def check_fman_submanifold(f, emb: EmbeddingSpec, points=None, tol: float = DEFAULT_TOL,
                           raise_on_closure: bool = True) -> CheckReport:
    """Closure of TN under ·, E·TN ⊂ TN, X·P(Y) = P(X·Y), then compatibility
    of the pair induced from the pencil built on the 𝔉-manifold."""
    from .fmanifold import build_pencil_from_fman, check_weak_f_condition
    holder = {}
    with timed(holder):
        u = emb.sample() if points is None else np.atleast_2d(np.asarray(points, dtype=float))
        x = emb.image(u)
        weak = check_weak_f_condition(f, x, tol)
        if not weak.passed:
            rep = precondition_failed("fman_submanifold", "weak F-condition fails", weak)
            raise PreconditionFailed("fman_submanifold: weak F-condition fails", rep)
        J = _check_rank(emb, u)
        fn = f.numerics(x)
        prod = np.einsum("pkij,pia,pjb->pkab", fn.cv, J, J)
        npts, n, m = J.shape
        sub1 = judge("product_closure", _span_residual(J, prod.reshape(npts, n, m * m)), u, tol)
        EJ = np.einsum("pki,pia->pka", fn.EM, J)
        sub2 = judge("euler_closure", _span_residual(J, EJ), u, tol)
        for sub, hyp in ((sub1, "product_closure"), (sub2, "euler_closure")):
            if not sub.passed and raise_on_closure:
                raise ClosureFailed(hyp, sub.witness[0]["point"], sub.residual)
        H = fn.mjt.H
        ht = np.einsum("pia,pij,pjb->pab", J, H, J)
        notes = []
        det = np.abs(np.linalg.det(ht))
        if (det <= DEGENERACY_EPS).any():
            # no g̃-orthogonal splitting TM = TN ⊕ TN^⊥
            i = int(np.argmin(det))
            sub3 = SubVerdict("projector_commutes", PRECONDITION_FAILED, None,
                              [{"point": u[i].tolist(), "det_induced": float(det[i])}])
            notes.append("induced metric is degenerate: the normal projector is undefined")
        else:
            PT = np.einsum("pia,pab,pjb,pjk->pik", J, np.linalg.inv(ht), J, H)
            P = np.eye(n)[None] - PT
            # X·P(Y) and P(X·Y) for X = J_a, Y = ∂_k
            lhs = np.einsum("plij,pia,pjk->plak", fn.cv, J, P)
            rhs = np.einsum("plm,pmik,pia->plak", P, fn.cv, J)
            sub3 = judge("projector_commutes", pointwise_residual(lhs, rhs), u, tol)
        subs = [sub1, sub2, sub3]
        if sub1.passed and sub2.passed and sub3.verdict != PRECONDITION_FAILED:
            pencil = build_pencil_from_fman(f, x)
            ind = check_induced_compatibility(pencil, emb, u, tol)
            subs.append(SubVerdict("induced_compatibility", ind.verdict, ind.residual, ind.witnesses[:1] or None))
            if ind.inconsistent:
                notes.extend(ind.notes)
    rep = combine("fman_submanifold", subs, notes=notes)
    if rep.passed and sub3.verdict == PRECONDITION_FAILED:
        rep.verdict = PRECONDITION_FAILED
    rep.millis = holder["millis"]
    return rep
