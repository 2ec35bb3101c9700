"""The ∘-multiplication α∘β = ∇_{g*α}β − ∇̃_{g*α}β on T*M and its laws.

Because ∇ − ∇̃ is tensorial, (α∘β)_j = −(g*α)^i K^k_ij β_k with K = Γ − Γ̃.
On coordinate forms the structure tensor is C[a, b, j] = (dx^a ∘ dx^b)_j.
"""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .geometry import OneForm, covariant_derivative_oneform
from .pencil import PencilSpec, _require_almost, contorsion, resolve_points
from .report import (DEFAULT_TOL, SKIPPED, CheckReport, SubVerdict, combine, judge,
                     pointwise_residual, timed)
from .errors import PreconditionFailed


def circ(p: PencilSpec, alpha: OneForm, beta: OneForm) -> OneForm:
    """α∘β as a symbolic 1-form, through the contorsion tensor."""
    n = p.chart.n
    K = contorsion(p).K
    con = p.g_star.matrix
    up = [ex.total(con[i, m] * alpha[m] for m in range(n)) for i in range(n)]
    comps = []
    for j in range(n):
        comps.append(-ex.total(up[i] * K[k, i, j] * beta[k] for i in range(n) for k in range(n)
                               if not (up[i].is_zero() or K[k, i, j].is_zero() or beta[k].is_zero())))
    return OneForm(p.chart, np.array(comps, dtype=object))


def circ_direct(p: PencilSpec, alpha: OneForm, beta: OneForm) -> OneForm:
    """α∘β from two explicit covariant derivatives (reference implementation)."""
    n = p.chart.n
    con = p.g_star.matrix
    up = [ex.total(con[i, m] * alpha[m] for m in range(n)) for i in range(n)]
    d1 = covariant_derivative_oneform(p.g.connection, beta)
    d2 = covariant_derivative_oneform(p.g_tilde.connection, beta)
    comps = [ex.total(up[i] * (d1[i, j] - d2[i, j]) for i in range(n)) for j in range(n)]
    return OneForm(p.chart, np.array(comps, dtype=object))


def structure(G, K):
    """C[p, a, b, j] = (dx^a ∘ dx^b)_j = −g^{ia} K^b_ij."""
    return -np.einsum("pia,pbij->pabj", G, K)


def product(C, u, v):
    """Pointwise (u∘v) for 1-form arrays u[p, a], v[p, b]."""
    return np.einsum("pa,pb,pabj->pj", u, v, C)


def check_invariance(p: PencilSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """g*(α∘β, γ) = g*(α, γ∘β) always; the g̃* law for almost-compatible pairs."""
    from .pencil import check_almost_compatible
    holder = {}
    with timed(holder):
        points = resolve_points(p, points)
        num = p.numerics(points)
        C = structure(num.mj.G, num.K)
        subs = []
        notes = []
        for name, G in (("g_law", num.mj.G), ("g_tilde_law", num.mjt.G)):
            if name == "g_tilde_law":
                almost = check_almost_compatible(p, points, tol)
                if not almost.passed:
                    subs.append(SubVerdict(name, SKIPPED))
                    notes.append("g~ law skipped: pair is not almost compatible")
                    continue
            lhs = np.einsum("pabj,pjc->pabc", C, G)
            rhs = np.einsum("pam,pcbm->pabc", G, C)
            subs.append(judge(name, pointwise_residual(lhs, rhs), points, tol))
    rep = combine("invariance", subs, notes=notes)
    rep.millis = holder["millis"]
    return rep


def check_right_symmetry(p: PencilSpec, points=None, tol: float = DEFAULT_TOL,
                         almost: CheckReport | None = None) -> CheckReport:
    """(β∘γ)∘α = (β∘α)∘γ on coordinate triples."""
    holder = {}
    with timed(holder):
        points = resolve_points(p, points)
        _require_almost(p, points, tol, almost, "right_symmetry")
        num = p.numerics(points)
        C = structure(num.mj.G, num.K)
        # lhs[b, c, a, j] = ((dx^b∘dx^c)∘dx^a)_j
        lhs = np.einsum("pbcm,pmaj->pbcaj", C, C)
        rhs = np.einsum("pbam,pmcj->pbcaj", C, C)
        sub = judge("right_symmetry", pointwise_residual(lhs, rhs), points, tol)
    rep = combine("right_symmetry", [sub])
    rep.millis = holder["millis"]
    return rep


def covariant_derivative_structure(Ct, dC, gamma_t):
    """∇̃_i C^{ab}_j for the (2,1)-tensor C (two contravariant slots)."""
    return (dC + np.einsum("pais,psbj->piabj", gamma_t, Ct)
            + np.einsum("pbis,pasj->piabj", gamma_t, Ct)
            - np.einsum("psij,pabs->piabj", gamma_t, Ct))


def circ_jet(num):
    """C and ∂_m C from the metric and connection jets."""
    G, dG, K, dK = num.mj.G, num.mj.dG, num.K, num.dK
    C = structure(G, K)
    dC = -(np.einsum("pmia,pbij->pmabj", dG, K) + np.einsum("pia,pmbij->pmabj", G, dK))
    return C, dC


def curvature_circ_residual(p: PencilSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """Curvature/∘ identity for an arbitrary pair, acting on δ.

    R_{g*α,g*β}(δ) = R̃_{g*α,g*β}(δ) + ∇̃_{g*α}(∘)(β,δ) − ∇̃_{g*β}(∘)(α,δ)
                     + α∘(β∘δ) − (α∘β)∘δ − β∘(α∘δ) + (β∘α)∘δ.

    The printed statement names the acted-on form γ on the left while the
    right-hand side only involves δ; δ is used on both sides.
    """
    holder = {}
    with timed(holder):
        points = resolve_points(p, points)
        num = p.numerics(points)
        G = num.mj.G
        R, sc = num.curvature("g")
        Rt, sct = num.curvature("g_tilde")
        C, dC = circ_jet(num)
        DC = covariant_derivative_structure(C, dC, num.cjt.gamma)   # [p, i, a, b, j]
        # (R_{X,Y} δ)_k = −δ_l R^l_kij X^i Y^j with X = g*dx^a, Y = g*dx^b, δ = dx^d
        lhs = -np.einsum("pdkij,pia,pjb->pabdk", R, G, G)
        curv_t = -np.einsum("pdkij,pia,pjb->pabdk", Rt, G, G)
        nab = np.einsum("pia,pibdk->pabdk", G, DC) - np.einsum("pib,piadk->pabdk", G, DC)
        a_bd = np.einsum("pbdm,pamk->pabdk", C, C)     # α∘(β∘δ)
        ab_d = np.einsum("pabm,pmdk->pabdk", C, C)     # (α∘β)∘δ
        alg = a_bd - ab_d - a_bd.transpose(0, 2, 1, 3, 4) + ab_d.transpose(0, 2, 1, 3, 4)
        rhs = curv_t + nab + alg
        sub = judge("identity", pointwise_residual(lhs, rhs, curv_t, nab, alg), points, tol)
    rep = combine("curvature_circ", [sub],
                  notes=["acted-on form read as delta on both sides (gamma absent from the right-hand side)"])
    rep.millis = holder["millis"]
    return rep
