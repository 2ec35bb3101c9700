"""Pointwise numeric jets of symbolic fields.

The pencil, ∘-algebra and submanifold checks work on arrays of values and
derivatives at sample points: components are differentiated symbolically
once, evaluated in a single compiled batch, and all contractions (inverse
metrics, Christoffel symbols, curvature of g_λ for every λ) are then done
with numpy.  Arrays carry the sample axis first; derivative axes follow it,
outermost first: ``d1[p, m, ...] = ∂_m F``, ``d2[p, m, q, ...] = ∂_m∂_q F``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .expr import Program


def jet(exprs, coords, points, order: int = 1, strict: bool = True):
    """Values and partial derivatives up to ``order`` (0, 1 or 2)."""
    arr = np.asarray(exprs, dtype=object)
    shape = arr.shape
    flat = [ex.as_expr(e) for e in arr.ravel()]
    n = len(coords)
    roots = list(flat)
    if order >= 1:
        d1 = [[ex.differentiate(e, c) for e in flat] for c in coords]
        for row in d1:
            roots.extend(row)
    if order >= 2:
        for m in range(n):
            for q in range(n):
                roots.extend(ex.differentiate(e, coords[q]) for e in d1[m])
    vals = Program(roots, coords)(points, strict=strict)
    npts = vals.shape[0]
    size = len(flat)
    out = [vals[:, :size].reshape((npts,) + shape)]
    if order >= 1:
        out.append(vals[:, size:size * (n + 1)].reshape((npts, n) + shape))
    if order >= 2:
        out.append(vals[:, size * (n + 1):].reshape((npts, n, n) + shape))
    return out


def inverse_jet(M, dM, ddM=None):
    """Jets of the pointwise matrix inverse from jets of the matrix."""
    inv = np.linalg.inv(M)
    # ∂(M⁻¹) = −M⁻¹ ∂M M⁻¹
    dinv = -np.einsum("pab,pmbc,pcd->pmad", inv, dM, inv)
    if ddM is None:
        return inv, dinv, None
    t = np.einsum("pab,pmbc,pcd,pqde,pef->pmqaf", inv, dM, inv, dM, inv)
    ddinv = t + t.transpose(0, 2, 1, 3, 4) - np.einsum("pab,pmqbc,pcd->pmqad", inv, ddM, inv)
    return inv, dinv, ddinv


@dataclass
class MetricJet:
    """Contravariant (G) and covariant (H) metric jets at sample points."""

    G: np.ndarray
    dG: np.ndarray
    ddG: np.ndarray | None
    H: np.ndarray
    dH: np.ndarray
    ddH: np.ndarray | None

    @classmethod
    def from_contravariant(cls, G, dG, ddG=None):
        H, dH, ddH = inverse_jet(G, dG, ddG)
        return cls(G, dG, ddG, H, dH, ddH)

    @classmethod
    def from_covariant(cls, H, dH, ddH=None):
        G, dG, ddG = inverse_jet(H, dH, ddH)
        return cls(G, dG, ddG, H, dH, ddH)

    def combine(self, other: "MetricJet", lam: float) -> "MetricJet":
        """Jet of the pencil metric g*_λ = g* + λ g̃*."""
        dd = None
        if self.ddG is not None and other.ddG is not None:
            dd = self.ddG + lam * other.ddG
        return MetricJet.from_contravariant(self.G + lam * other.G, self.dG + lam * other.dG, dd)


def metric_jet(metric, points, order: int = 2) -> MetricJet:
    """Evaluate a :class:`~pencilkit.geometry.MetricField` and its derivatives."""
    from .geometry import CONTRAVARIANT
    parts = jet(metric.matrix, metric.chart.coords, points, order)
    dd = parts[2] if order >= 2 else None
    if metric.variance == CONTRAVARIANT:
        return MetricJet.from_contravariant(parts[0], parts[1], dd)
    return MetricJet.from_covariant(parts[0], parts[1], dd)


@dataclass
class ConnectionJet:
    gamma: np.ndarray            # [p, k, i, j]
    dgamma: np.ndarray | None    # [p, m, k, i, j] = ∂_m Γ^k_ij


def levi_civita(mj: MetricJet) -> ConnectionJet:
    """Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij) and its first derivatives."""
    dH = mj.dH  # [p, m, a, b] = ∂_m g_ab
    F = 0.5 * (np.einsum("pijl->plij", dH) + np.einsum("pjil->plij", dH) - dH)
    gamma = np.einsum("pkl,plij->pkij", mj.G, F)
    dgamma = None
    if mj.ddH is not None:
        ddH = mj.ddH  # [p, m, q, a, b]
        dF = 0.5 * (np.einsum("pmijl->pmlij", ddH) + np.einsum("pmjil->pmlij", ddH) - ddH)
        dgamma = (np.einsum("pmkl,plij->pmkij", mj.dG, F)
                  + np.einsum("pkl,pmlij->pmkij", mj.G, dF))
    return ConnectionJet(gamma, dgamma)


def curvature(cj: ConnectionJet):
    """R^l_kij and the per-point magnitude of the terms that build it."""
    G, dG = cj.gamma, cj.dgamma
    t1 = np.einsum("pilJk->plkiJ", dG)      # ∂_i Γ^l_jk
    t2 = np.einsum("pJlik->plkiJ", dG)      # ∂_j Γ^l_ik
    t3 = np.einsum("plis,psJk->plkiJ", G, G)
    t4 = np.einsum("plJs,psik->plkiJ", G, G)
    R = t1 - t2 + t3 - t4
    npts = R.shape[0]
    scale = np.max(np.abs(np.stack([t1, t2, t3, t4]).reshape(4, npts, -1)), axis=(0, 2))
    return R, scale
